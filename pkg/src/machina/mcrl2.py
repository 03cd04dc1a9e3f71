"""Parser for the mCRL2 subset produced by :mod:`machina.emitter`.

It checks that the emitted text is well formed and consistent: every
section parses, every action is declared with the arity it is used with,
and every process reference names a declared process.  It is not a
type checker.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class Mcrl2Error(ValueError):
    code = "MCRL2_SYNTAX"

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


_TOKEN = re.compile(
    r"\s+|%[^\n]*"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<num>\d+)"
    r"|(?P<op>->|<>|=>|==|!=|<=|>=|&&|\|\||\+\+|\|>|<\||[-+.,;:#=()\[\]!<>?|])"
)

SECTIONS = ("sort", "map", "var", "eqn", "act", "proc", "init")
BUILTIN_SORTS = {"Bool", "Nat", "Int", "Pos"}


@dataclass
class Spec:
    sorts: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    acts: dict = field(default_factory=dict)  # name -> arity
    procs: dict = field(default_factory=dict)  # name -> [param names]
    summands: dict = field(default_factory=dict)  # name -> number of summands
    action_uses: list = field(default_factory=list)  # (name, arity, line)
    proc_uses: list = field(default_factory=list)  # (name, line)
    init: str = ""


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos, line = 0, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise Mcrl2Error(line, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind is not None:
            out.append((kind, m.group(kind), line))
        line += m.group(0).count("\n")
        pos = m.end()
    out.append(("eof", "", line))
    return out


class _P:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.spec = Spec()

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self):
        return self.toks[self.i]

    def at(self, value: str) -> bool:
        return self.tok[1] == value and self.tok[0] != "eof"

    def take(self, value=None, kind=None) -> str:
        k, v, line = self.tok
        if (value is not None and v != value) or (kind is not None and k != kind) or k == "eof":
            want = value or kind
            raise Mcrl2Error(line, f"expected {want!r}, found {v or 'end of input'!r}")
        self.i += 1
        return v

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.i += 1
            return True
        return False

    def ident(self) -> str:
        if self.tok[1] in SECTIONS:
            raise Mcrl2Error(self.tok[2], f"unexpected keyword {self.tok[1]!r}")
        return self.take(kind="id")

    # -- sorts -------------------------------------------------------------

    def sort_expr(self) -> str:
        parts = [self.sort_atom()]
        while self.accept("#"):
            parts.append(self.sort_atom())
        if self.accept("->"):
            return " # ".join(parts) + " -> " + self.sort_expr()
        return " # ".join(parts)

    def sort_atom(self) -> str:
        name = self.ident()
        if name == "List":
            self.take("(")
            inner = self.sort_expr()
            self.take(")")
            return f"List({inner})"
        return name

    def struct(self) -> list[str]:
        ctors = []
        while True:
            name = self.ident()
            ctors.append(name)
            if self.accept("("):
                while True:
                    self.ident()
                    self.take(":")
                    self.sort_expr()
                    if not self.accept(","):
                        break
                self.take(")")
            if self.accept("?"):
                self.spec.maps[self.ident()] = "recogniser"
            if not self.accept("|"):
                return ctors

    # -- data --------------------------------------------------------------

    def data(self):
        self.d_or()
        if self.accept("=>"):
            self.data()

    def d_or(self):
        self.d_and()
        while self.accept("||"):
            self.d_and()

    def d_and(self):
        self.d_cmp()
        while self.accept("&&"):
            self.d_cmp()

    def d_cmp(self):
        self.d_cons()
        if self.tok[1] in ("==", "!=", "<", ">", "<=", ">=", "in"):
            self.i += 1
            self.d_cons()

    def d_cons(self):
        self.d_unary()
        while self.tok[1] in ("++", "|>", "<|"):
            self.i += 1
            self.d_unary()

    def d_unary(self):
        if self.accept("!"):
            return self.d_unary()
        k, v, line = self.tok
        if k == "num":
            self.i += 1
        elif self.accept("("):
            self.data()
            self.take(")")
        elif self.accept("["):
            if not self.accept("]"):
                self.data()
                while self.accept(","):
                    self.data()
                self.take("]")
        elif k == "id":
            self.ident()
            if self.accept("("):
                self.data()
                while self.accept(","):
                    self.data()
                self.take(")")
        else:
            raise Mcrl2Error(line, f"expected a data expression, found {v!r}")

    # -- processes ---------------------------------------------------------

    def process(self) -> int:
        n = 1
        self.summand()
        while self.accept("+"):
            self.summand()
            n += 1
        return n

    def summand(self):
        if self.accept("sum"):
            self.var_decls()
            self.take(".")
            return self.summand()
        save = self.i
        try:
            self.data()
            if self.at("->"):
                self.take("->")
                self.summand()
                if self.accept("<>"):
                    self.summand()
                return
        except Mcrl2Error:
            pass
        self.i = save
        self.sequence()

    def sequence(self):
        self.p_atom()
        while self.accept("."):
            self.p_atom()

    def p_atom(self):
        if self.accept("("):
            self.process()
            self.take(")")
            return
        line = self.tok[2]
        name = self.ident()
        if name in ("tau", "delta"):
            return
        if name.startswith("P_"):
            self.spec.proc_uses.append((name, line))
            self.take("(")
            if not self.accept(")"):
                while True:
                    if self.tok[0] == "id" and self.toks[self.i + 1][1] == "=":
                        self.ident()
                        self.take("=")
                    self.data()
                    if not self.accept(","):
                        break
                self.take(")")
            return
        arity = 0
        if self.accept("("):
            arity = 1
            self.data()
            while self.accept(","):
                self.data()
                arity += 1
            self.take(")")
        self.spec.action_uses.append((name, arity, line))

    def var_decls(self) -> list[str]:
        names = []
        while True:
            group = [self.ident()]
            while self.accept(","):
                group.append(self.ident())
            self.take(":")
            self.sort_expr()
            names += group
            if not self.accept(","):
                return names

    # -- sections ----------------------------------------------------------

    def parse(self) -> Spec:
        while self.tok[0] != "eof":
            sec = self.take(kind="id")
            if sec not in SECTIONS:
                raise Mcrl2Error(self.toks[self.i - 1][2], f"unknown section {sec!r}")
            getattr(self, f"sec_{sec}")()
        return self.spec

    def _items(self):
        while self.tok[0] == "id" and self.tok[1] not in SECTIONS:
            yield
            self.take(";")

    def sec_sort(self):
        for _ in self._items():
            name = self.ident()
            self.take("=")
            if self.accept("struct"):
                self.spec.sorts[name] = self.struct()
                for c in self.spec.sorts[name]:
                    self.spec.maps[c] = name
            else:
                self.spec.sorts[name] = self.sort_expr()

    def sec_map(self):
        for _ in self._items():
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            self.take(":")
            s = self.sort_expr()
            for n in names:
                self.spec.maps[n] = s

    def sec_var(self):
        for _ in self._items():
            self.var_decls()

    def sec_eqn(self):
        for _ in self._items():
            self.data()
            self.take("=")
            self.data()

    def sec_act(self):
        for _ in self._items():
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            arity = 0
            if self.accept(":"):
                arity = 1
                self.sort_atom()
                while self.accept("#"):
                    self.sort_atom()
                    arity += 1
            for n in names:
                self.spec.acts[n] = arity

    def sec_proc(self):
        for _ in self._items():
            name = self.ident()
            params = []
            if self.accept("("):
                params = self.var_decls()
                self.take(")")
            self.take("=")
            if name in self.spec.procs:
                raise Mcrl2Error(self.tok[2], f"process {name} declared twice")
            self.spec.procs[name] = params
            self.spec.summands[name] = self.process()

    def sec_init(self):
        start = self.i
        self.process()
        self.take(";")
        self.spec.init = " ".join(v for _, v, _ in self.toks[start : self.i - 1])


def parse_mcrl2(text: str) -> Spec:
    """Parse and cross-check *text*; raises :class:`Mcrl2Error`."""
    spec = _P(text).parse()
    for name, arity, line in spec.action_uses:
        if name not in spec.acts:
            raise Mcrl2Error(line, f"undeclared action {name}")
        if spec.acts[name] != arity:
            raise Mcrl2Error(line, f"action {name} used with {arity} arguments, declared with {spec.acts[name]}")
    for name, line in spec.proc_uses:
        if name not in spec.procs:
            raise Mcrl2Error(line, f"undeclared process {name}")
    if not spec.init:
        raise Mcrl2Error(0, "missing init section")
    return spec
