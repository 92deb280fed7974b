"""Tensor-algebra frontend.

Parses single-statement accumulation kernels of the form

    C[m,n] += A[m,k] * B[n,k]; m=16 n=16 k=16

into a nested-loop representation with integer access matrices. Index
expressions are sums of iterators (`y+p`); each tensor index dimension
becomes one matrix row with 0/1 coefficients over the declared iterator
order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path


class ParseError(ValueError):
    """Syntax or semantic error with source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class TensorAccess:
    """One tensor reference: index = access_matrix . x + offsets."""

    tensor_name: str
    access_matrix: tuple[tuple[int, ...], ...]
    offsets: tuple[int, ...]

    def __post_init__(self):
        if len(self.offsets) != len(self.access_matrix):
            raise ValueError("offsets length must equal tensor rank")
        widths = {len(r) for r in self.access_matrix}
        if len(widths) > 1:
            raise ValueError("ragged access matrix")

    @property
    def rank(self) -> int:
        return len(self.access_matrix)

    def index_of(self, x: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(
            sum(a * xi for a, xi in zip(row, x)) + off
            for row, off in zip(self.access_matrix, self.offsets)
        )


@dataclass(frozen=True)
class TensorAlgebra:
    """A perfectly nested accumulation statement over declared iterators."""

    name: str
    iterators: tuple[tuple[str, int], ...]
    output: TensorAccess
    inputs: tuple[TensorAccess, ...]

    def __post_init__(self):
        if not 1 <= len(self.inputs) <= 3:
            raise ValueError("expected 1..3 input tensors")
        for nm, bound in self.iterators:
            if bound < 1:
                raise ValueError(f"iterator {nm} has bound {bound} < 1")
        n = len(self.iterators)
        ranks: dict[str, int] = {}
        for acc in (self.output, *self.inputs):
            for row in acc.access_matrix:
                if len(row) != n:
                    raise ValueError(
                        f"{acc.tensor_name}: access row width {len(row)} != "
                        f"{n} iterators"
                    )
            prev = ranks.setdefault(acc.tensor_name, acc.rank)
            if prev != acc.rank:
                raise ValueError(
                    f"tensor {acc.tensor_name} used with ranks {prev} and {acc.rank}"
                )

    @property
    def iterator_names(self) -> tuple[str, ...]:
        return tuple(nm for nm, _ in self.iterators)

    @property
    def bounds(self) -> tuple[int, ...]:
        return tuple(b for _, b in self.iterators)

    @property
    def reduction_iterators(self) -> tuple[str, ...]:
        """Iterators absent from the output access (accumulated over)."""
        live = set()
        for row in self.output.access_matrix:
            for i, a in enumerate(row):
                if a:
                    live.add(i)
        return tuple(nm for i, (nm, _) in enumerate(self.iterators) if i not in live)

    def iterator_index(self, name: str) -> int:
        for i, (nm, _) in enumerate(self.iterators):
            if nm == name:
                return i
        raise KeyError(name)

    def extent_of(self, acc: TensorAccess) -> tuple[int, ...]:
        """Tensor extents inferred from loop bounds (max index + 1 per dim)."""
        hi = tuple(b - 1 for b in self.bounds)
        return tuple(i + 1 for i in acc.index_of(hi))

    @property
    def all_accesses(self) -> tuple[TensorAccess, ...]:
        return (*self.inputs, self.output)

    def pretty(self) -> str:
        """Render back to parseable source text."""

        def one(acc: TensorAccess) -> str:
            names = self.iterator_names
            dims = []
            for row in acc.access_matrix:
                terms = [names[i] for i, a in enumerate(row) for _ in range(a)]
                dims.append("+".join(terms) if terms else "0")
            return f"{acc.tensor_name}[{','.join(dims)}]"

        stmt = f"{one(self.output)} += " + " * ".join(one(a) for a in self.inputs)
        bounds = " ".join(f"{nm}={b}" for nm, b in self.iterators)
        return f"{stmt}; {bounds}"


# --- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<comment>#[^\n]*)|(?P<name>[A-Za-z_]\w*)|(?P<int>\d+)"
    r"|(?P<pluseq>\+=)|(?P<sym>[\[\],+*=;])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, text, line, m.start() - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = m.start() + text.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, len(source) - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self, kind: str, text: str | None = None) -> _Tok:
        t = self.toks[self.i]
        if t.kind != kind or (text is not None and t.text != text):
            want = text if text is not None else kind
            raise ParseError(f"expected {want!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        self.i += 1
        return t

    def access(self) -> tuple[str, list[list[_Tok]]]:
        """tensor[expr, expr, ...]; each expr is a list of iterator tokens."""
        name = self.take("name")
        self.take("sym", "[")
        dims = [self.expr()]
        while self.peek().text == ",":
            self.take("sym", ",")
            dims.append(self.expr())
        self.take("sym", "]")
        return name.text, dims

    def expr(self) -> list[_Tok]:
        terms = [self.take("name")]
        while self.peek().text == "+":
            self.take("sym", "+")
            terms.append(self.take("name"))
        return terms

    def parse(self) -> tuple[list, list[tuple[str, int]]]:
        out = self.access()
        self.take("pluseq")
        ins = [self.access()]
        while self.peek().text == "*":
            self.take("sym", "*")
            ins.append(self.access())
        self.take("sym", ";")
        bounds = []
        while self.peek().kind == "name":
            nm = self.take("name")
            self.take("sym", "=")
            val = self.take("int")
            bounds.append((nm, int(val.text)))
        self.take("eof")
        return [out, *ins], bounds


def parse_tensor_algebra(source: str, name: str | None = None) -> TensorAlgebra:
    """Parse one `.ta` statement. `name` defaults to the output tensor name."""
    p = _Parser(source)
    accesses, bound_toks = p.parse()
    if not bound_toks:
        t = p.toks[-1]
        raise ParseError("missing iterator bounds after ';'", t.line, t.col)
    seen: dict[str, int] = {}
    for nm, _ in bound_toks:
        if nm.text in seen:
            raise ParseError(f"iterator {nm.text!r} declared twice", nm.line, nm.col)
        seen[nm.text] = 1
    iterators = tuple((nm.text, b) for nm, b in bound_toks)
    order = {nm: i for i, nm in enumerate(n for n, _ in iterators)}

    def build(raw) -> TensorAccess:
        tname, dims = raw
        mat = []
        for terms in dims:
            row = [0] * len(iterators)
            for t in terms:
                if t.text not in order:
                    raise ParseError(f"unknown iterator {t.text!r}", t.line, t.col)
                if row[order[t.text]]:
                    raise ParseError(
                        f"iterator {t.text!r} repeated in one index", t.line, t.col
                    )
                row[order[t.text]] = 1
            mat.append(tuple(row))
        return TensorAccess(tname, tuple(mat), (0,) * len(mat))

    out, *ins = [build(a) for a in accesses]
    ranks: dict[str, int] = {}
    for raw, acc in zip(accesses, [out, *ins]):
        prev = ranks.setdefault(acc.tensor_name, acc.rank)
        if prev != acc.rank:
            # find the offending token for a positioned error
            head = raw[1][0][0]
            raise ParseError(
                f"tensor {acc.tensor_name!r} used with {acc.rank} dims, "
                f"previously {prev}",
                head.line, head.col,
            )
    return TensorAlgebra(
        name=name or out.tensor_name,
        iterators=iterators,
        output=out,
        inputs=tuple(ins),
    )


def load_tensor_algebra(path: str | Path) -> TensorAlgebra:
    p = Path(path)
    return parse_tensor_algebra(p.read_text(encoding="utf-8"), name=p.stem)
