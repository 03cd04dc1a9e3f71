import sys

from machina.cli import main

sys.exit(main())
