"""Share matrix bookkeeping.

``s[i, j]`` is the cumulative amount of resource peer ``i`` uploaded to peer
``j``. Storage is sparse: absent entries are zero and stored amounts are
strictly positive. The diagonal is always empty.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import (
    LedgerError,
    NegativeAmount,
    NonSquare,
    ParseError,
    PeerOutOfRange,
    SelfTransaction,
)

FORMATS = ("dense-csv", "sparse-json")


class ShareMatrix:
    """Sparse N x N nonnegative ledger of uploaded amounts.

    Mutation goes through :meth:`record`; everything else is read-only, so a
    ledger can be shared freely between readers once it is built.
    """

    __slots__ = ("_n", "_entries", "_rows", "_cols")

    def __init__(self, n: int, entries: dict[tuple[int, int], float] | None = None):
        if not isinstance(n, int) or n < 2:
            raise LedgerError(f"a ledger needs at least 2 peers, got n={n!r}")
        self._n = n
        self._entries: dict[tuple[int, int], float] = {}
        self._rows = None
        self._cols = None
        for (i, j), amount in (entries or {}).items():
            self.record(i, j, amount)

    @classmethod
    def from_dense(cls, rows: Iterable[Iterable[float]]) -> "ShareMatrix":
        rows = [list(r) for r in rows]
        n = len(rows)
        for i, r in enumerate(rows):
            if len(r) != n:
                raise NonSquare(f"row {i} has {len(r)} entries, expected {n}")
        ledger = cls(n)
        for i, r in enumerate(rows):
            for j, v in enumerate(r):
                v = float(v)
                if v < 0:
                    raise NegativeAmount(f"s[{i},{j}] = {v} is negative")
                if v > 0:
                    ledger.record(i, j, v)
        return ledger

    @property
    def n(self) -> int:
        return self._n

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        self._check_peer(i)
        self._check_peer(j)
        return self._entries.get((i, j), 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ShareMatrix):
            return NotImplemented
        return self._n == other._n and self._entries == other._entries

    def __repr__(self) -> str:
        return f"ShareMatrix(n={self._n}, nnz={len(self._entries)})"

    def items(self) -> Iterator[tuple[tuple[int, int], float]]:
        """Stored entries in (row, column) order."""
        for key in sorted(self._entries):
            yield key, self._entries[key]

    @property
    def nnz(self) -> int:
        return len(self._entries)

    def copy(self) -> "ShareMatrix":
        other = ShareMatrix.__new__(ShareMatrix)
        other._n = self._n
        other._entries = dict(self._entries)
        other._rows = None
        other._cols = None
        return other

    def to_dense(self) -> list[list[float]]:
        out = [[0.0] * self._n for _ in range(self._n)]
        for (i, j), v in self._entries.items():
            out[i][j] = v
        return out

    def transpose(self) -> "ShareMatrix":
        return ShareMatrix(self._n, {(j, i): v for (i, j), v in self._entries.items()})

    def _check_peer(self, i) -> None:
        if not isinstance(i, int) or not 0 <= i < self._n:
            raise PeerOutOfRange(f"peer {i!r} outside [0, {self._n})")

    def record(self, uploader: int, downloader: int, amount: float) -> "ShareMatrix":
        """Add ``amount`` to ``s[uploader, downloader]`` in place."""
        self._check_peer(uploader)
        self._check_peer(downloader)
        if uploader == downloader:
            raise SelfTransaction(f"peer {uploader} cannot upload to itself")
        amount = float(amount)
        if not amount >= 0 or math.isinf(amount):
            raise NegativeAmount(f"amount must be a finite nonnegative number, got {amount}")
        if amount == 0:
            return self
        key = (uploader, downloader)
        self._entries[key] = self._entries.get(key, 0.0) + amount
        self._rows = self._cols = None
        return self

    # Row/column adjacency in ascending index order; rebuilt lazily after writes.
    def rows(self) -> list[tuple[tuple[int, ...], tuple[float, ...]]]:
        """Per peer, the (columns, amounts) of its uploads."""
        if self._rows is None:
            self._rows = self._adjacency(transpose=False)
        return self._rows

    def cols(self) -> list[tuple[tuple[int, ...], tuple[float, ...]]]:
        """Per peer, the (rows, amounts) of its downloads."""
        if self._cols is None:
            self._cols = self._adjacency(transpose=True)
        return self._cols

    def _adjacency(self, transpose: bool):
        buckets: list[list[tuple[int, float]]] = [[] for _ in range(self._n)]
        for (i, j), v in self._entries.items():
            if transpose:
                buckets[j].append((i, v))
            else:
                buckets[i].append((j, v))
        out = []
        for b in buckets:
            b.sort()
            out.append((tuple(k for k, _ in b), tuple(v for _, v in b)))
        return out

    def upload_totals(self) -> list[float]:
        return [math.fsum(vals) for _, vals in self.rows()]

    def download_totals(self) -> list[float]:
        return [math.fsum(vals) for _, vals in self.cols()]

    def total(self) -> float:
        return math.fsum(self._entries.values())

    def counterparts(self, i: int) -> tuple[int, ...]:
        """Peers that uploaded to or downloaded from ``i``."""
        return tuple(sorted(set(self.rows()[i][0]) | set(self.cols()[i][0])))


@dataclass(frozen=True)
class LedgerSummary:
    upload_totals: tuple[float, ...]
    download_totals: tuple[float, ...]
    total: float


def summarize(ledger: ShareMatrix) -> LedgerSummary:
    return LedgerSummary(
        upload_totals=tuple(ledger.upload_totals()),
        download_totals=tuple(ledger.download_totals()),
        total=ledger.total(),
    )


def record_transaction(ledger: ShareMatrix, uploader: int, downloader: int,
                       amount: float) -> ShareMatrix:
    """Return a copy of ``ledger`` with the transaction added."""
    return ledger.copy().record(uploader, downloader, amount)


def free_riders(ledger: ShareMatrix) -> set[int]:
    """Peers that downloaded something but never uploaded anything."""
    rows, cols = ledger.rows(), ledger.cols()
    return {i for i in range(ledger.n) if not rows[i][0] and cols[i][0]}


def is_balanced(ledger: ShareMatrix, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    up, down = ledger.upload_totals(), ledger.download_totals()
    return all(abs(u - d) <= tol for u, d in zip(up, down))


def strongly_connected_components(ledger: ShareMatrix) -> list[list[int]]:
    """Tarjan's algorithm on the digraph i -> j for s[i, j] > 0, iteratively."""
    n = ledger.n
    succ = [cols for cols, _ in ledger.rows()]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    components: list[list[int]] = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            edges = succ[v]
            while pos < len(edges):
                w = edges[pos]
                pos += 1
                if index[w] == -1:
                    work.append((v, pos))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                components.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return components


def is_irreducible(ledger: ShareMatrix) -> bool:
    return len(strongly_connected_components(ledger)) == 1


# -- file formats ---------------------------------------------------------

def _format_amount(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _json_amount(v: float):
    return int(v) if v.is_integer() and abs(v) < 1e15 else v


def save_ledger(ledger: ShareMatrix, format: str = "dense-csv") -> bytes:
    if format == "dense-csv":
        lines = [",".join(_format_amount(v) for v in row) for row in ledger.to_dense()]
        return ("\n".join(lines) + "\n").encode()
    if format == "sparse-json":
        doc = {
            "n": ledger.n,
            "entries": [{"from": i, "to": j, "amount": _json_amount(v)}
                        for (i, j), v in ledger.items()],
        }
        return (json.dumps(doc, indent=2) + "\n").encode()
    raise ValueError(f"unknown ledger format {format!r}; expected one of {FORMATS}")


def load_ledger(source: bytes | str, format: str = "dense-csv") -> ShareMatrix:
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8: {exc}") from None
    if format == "dense-csv":
        return _load_dense_csv(source)
    if format == "sparse-json":
        return _load_sparse_json(source)
    raise ValueError(f"unknown ledger format {format!r}; expected one of {FORMATS}")


def _parse_amount(text: str, line: int, field: int) -> float:
    try:
        v = float(text.strip())
    except ValueError:
        raise ParseError(f"{text.strip()!r} is not a number", line, field) from None
    if math.isnan(v) or math.isinf(v):
        raise ParseError(f"{text.strip()!r} is not a finite number", line, field)
    if v < 0:
        raise NegativeAmount(f"line {line}, field {field}: negative amount {v}")
    return v


def _load_dense_csv(text: str) -> ShareMatrix:
    rows = []
    for lineno, record in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not record or all(not c.strip() for c in record):
            continue
        rows.append([_parse_amount(c, lineno, k) for k, c in enumerate(record, start=1)])
    if not rows:
        raise ParseError("empty matrix")
    n = len(rows)
    for k, r in enumerate(rows, start=1):
        if len(r) != n:
            raise NonSquare(f"row {k} has {len(r)} fields, expected {n}")
    for i in range(n):
        if rows[i][i] != 0:
            raise SelfTransaction(f"diagonal entry s[{i},{i}] = {rows[i][i]} must be zero")
    return ShareMatrix.from_dense(rows)


def _load_sparse_json(text: str) -> ShareMatrix:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or "n" not in doc:
        raise ParseError('expected an object with keys "n" and "entries"')
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ParseError(f'"n" must be an integer, got {n!r}', field="n")
    entries = doc.get("entries", [])
    if not isinstance(entries, list):
        raise ParseError('"entries" must be a list', field="entries")
    ledger = ShareMatrix(n)
    for k, e in enumerate(entries):
        where = f"entries[{k}]"
        if not isinstance(e, dict):
            raise ParseError("entry must be an object", field=where)
        try:
            i, j, amount = e["from"], e["to"], e["amount"]
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r}", field=where) from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (i, j)):
            raise ParseError('"from" and "to" must be integers', field=where)
        if not isinstance(amount, (int, float)) or isinstance(amount, bool):
            raise ParseError('"amount" must be a number', field=where)
        if amount < 0:
            raise NegativeAmount(f"{where}: negative amount {amount}")
        ledger.record(i, j, amount)
    return ledger
