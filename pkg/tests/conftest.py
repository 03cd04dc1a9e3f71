import sys
from pathlib import Path

import pytest

from machina import CORPUS
from machina.dsl import load_model
from machina.lts import build_lts

sys.path.insert(0, str(Path(__file__).parent))

CYLINDER = CORPUS / "cylinder"
MINIMAL = CORPUS / "minimal" / "minimal.cmdl"


@pytest.fixture(scope="session")
def cylinder_spec():
    return load_model(CYLINDER / "cylinder.cmdl")


@pytest.fixture(scope="session")
def fixed_spec():
    return load_model(CYLINDER / "cylinder_fixed.cmdl")


@pytest.fixture(scope="session")
def minimal_spec():
    return load_model(MINIMAL)


@pytest.fixture(scope="session")
def cylinder_lts(cylinder_spec):
    return build_lts(cylinder_spec)


@pytest.fixture(scope="session")
def fixed_lts(fixed_spec):
    return build_lts(fixed_spec, keep_configs=False)
