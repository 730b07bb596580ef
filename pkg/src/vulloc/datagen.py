"""Deterministic synthetic MiniC corpora with exact vulnerable-line truth.

Six statement-level flaw templates, each emitting a vulnerable function and
a safe twin that differs on exactly one line (the labeled one). Easy mode
keeps the discriminating pattern in a short function; hard mode renames
identifiers per function, buries the flaw behind 5-30 distractor statements
and nested control flow, stretches def-use chains past ten lines, and mixes
in look-alike benign constructs (in-bounds offset writes, guarded divisions,
valid pointer writes) so surface rules learned on the easy corpus stop
working.

All functions stay inside the supported grammar, one statement per line, so
the line of every node is unambiguous. Side variables always flow into a
sink accumulator to avoid accidental dead stores, keeping each template's
flaw the only one of its kind in the function.
"""

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .codegraph import annotate, build_cpg
from .errors import GraphTooLarge, InvalidSpec
from .frontend import parse_source

KINDS = ("BufferOverrun", "IntegerOverflow", "DivideByZero",
         "NullDereference", "UninitializedValue", "DeadStore")

EASY_TS_START = 1_000_000
HARD_TS_START = 2_000_000

_EASY_POOLS = {
    "array": ["buf", "arr", "data", "vec", "tab"],
    "index": ["i", "j", "k", "idx", "pos"],
    "scalar": ["x", "y", "z", "val", "tmp", "out", "res", "acc", "cnt",
               "lim", "den", "num", "ret", "sum2", "total"],
    "pointer": ["p", "q", "ptr", "ref"],
}

_CONSONANTS = "bcdfghjklmnpqrstvwz"
_VOWELS = "aeiou"


@dataclass
class CorpusSpec:
    count: int
    vulnerable_fraction: float = 0.5
    difficulty: str = "easy"
    seed: int = 0
    weights: dict | None = None
    timestamp_start: int | None = None

    def __post_init__(self):
        if self.count < 1:
            raise InvalidSpec(f"count must be >= 1, got {self.count}")
        if not (0.0 <= self.vulnerable_fraction <= 1.0):
            raise InvalidSpec("vulnerable_fraction must be in [0, 1]")
        if self.difficulty not in ("easy", "hard"):
            raise InvalidSpec(f"unknown difficulty {self.difficulty!r}")
        if self.weights is None:
            self.weights = {k: 1.0 / len(KINDS) for k in KINDS}
        unknown = set(self.weights) - set(KINDS)
        if unknown:
            raise InvalidSpec(f"unknown template kinds: {sorted(unknown)}")
        if abs(sum(self.weights.values()) - 1.0) > 1e-9:
            raise InvalidSpec("template weights must sum to 1")
        if self.timestamp_start is None:
            self.timestamp_start = (EASY_TS_START if self.difficulty == "easy"
                                    else HARD_TS_START)


class _Names:
    """Per-function identifier allocator; hard mode invents fresh names."""

    def __init__(self, rng: random.Random, hard: bool):
        self.rng = rng
        self.hard = hard
        self.used: set[str] = set()
        self.pools = {k: list(v) for k, v in _EASY_POOLS.items()}

    def fresh(self, role: str) -> str:
        if self.hard:
            while True:
                n = self.rng.randint(2, 3)
                name = "".join(self.rng.choice(_CONSONANTS) + self.rng.choice(_VOWELS)
                               for _ in range(n))
                if self.rng.random() < 0.5:
                    name += str(self.rng.randint(0, 9))
                if name not in self.used:
                    self.used.add(name)
                    return name
        pool = [n for n in self.pools[role] if n not in self.used]
        if pool:
            name = self.rng.choice(pool)
        else:
            base = self.rng.choice(self.pools[role])
            k = 2
            while f"{base}{k}" in self.used:
                k += 1
            name = f"{base}{k}"
        self.used.add(name)
        return name


class _Builder:
    """Assembles one function: declarations, units of statements, a return.

    Declarations only carry initializers when the initial value is actually
    read before any overwrite; otherwise the init would itself be a dead
    store and muddy the DeadStore template's signal.
    """

    def __init__(self, rng: random.Random, hard: bool):
        self.rng = rng
        self.hard = hard
        self.names = _Names(rng, hard)
        self.arg = self.names.fresh("scalar") if hard else "arg"
        self.names.used.add(self.arg)
        self.decls: list[str] = []
        self.mix = self.names.fresh("scalar")
        self.decls.append(f"int {self.mix} = 0;")
        self._nonzero: str | None = None

    def nonzero_var(self) -> str:
        if self._nonzero is None:
            self._nonzero = self.names.fresh("scalar")
            self.decls.append(f"int {self._nonzero} = {self.rng.randint(2, 9)};")
        return self._nonzero

    # -- distractor units; every written variable flows into the sink --

    def _light_unit(self) -> list[str]:
        d = self.names.fresh("scalar")
        k = self.rng.randint(1, 9)
        roll = self.rng.random()
        if roll < 0.4:
            self.decls.append(f"int {d} = {self.rng.randint(0, 9)};")
            lines = [f"{d} = {d} + {k};"]
        elif roll < 0.7:
            self.decls.append(f"int {d};")
            lines = [f"{d} = {self.arg} - {k};"]
        else:
            self.decls.append(f"int {d} = {self.rng.randint(0, 9)};")
            lines = [f"if ({self.arg} < {self.rng.randint(2, 99)})",
                     "{", f"{d} = {d} + 1;", "}"]
        lines.append(f"{self.mix} = {self.mix} + {d};")
        return lines

    def _heavy_unit(self) -> list[str]:
        roll = self.rng.random()
        if roll < 0.25:  # in-bounds loop write
            arr = self.names.fresh("array")
            j = self.names.fresh("index")
            sz = self.rng.choice([4, 8, 16])
            self.decls.append(f"int {arr}[{sz}];")
            self.decls.append(f"int {j};")
            return [f"for ({j} = 0; {j} < {sz}; {j} = {j} + 1)",
                    "{", f"{arr}[{j}] = {j};", "}",
                    f"{self.mix} = {self.mix} + {arr}[0];"]
        if roll < 0.4:  # in-bounds offset write: bound reduced to make +1 safe
            arr = self.names.fresh("array")
            j = self.names.fresh("index")
            sz = self.rng.choice([8, 16])
            self.decls.append(f"int {arr}[{sz}];")
            self.decls.append(f"int {j};")
            return [f"for ({j} = 0; {j} < {sz} - 1; {j} = {j} + 1)",
                    "{", f"{arr}[{j} + 1] = {j};", "}",
                    f"{self.mix} = {self.mix} + {arr}[1];"]
        if roll < 0.55:  # guarded division by a known-nonzero variable
            d = self.names.fresh("scalar")
            self.decls.append(f"int {d};")
            return [f"{d} = {self.arg} / {self.nonzero_var()};",
                    f"{self.mix} = {self.mix} + {d};"]
        if roll < 0.7:  # valid pointer write
            pv = self.names.fresh("pointer")
            d = self.names.fresh("scalar")
            self.decls.append(f"int {d} = {self.rng.randint(1, 9)};")
            self.decls.append(f"int *{pv};")
            return [f"{pv} = &{d};", f"*{pv} = {self.rng.randint(1, 99)};",
                    f"{self.mix} = {self.mix} + {d};"]
        if roll < 0.85:  # big constant without a product
            d = self.names.fresh("scalar")
            self.decls.append(f"int {d};")
            big = self.rng.choice([65536, 100000, 1048576, 4194304])
            return [f"{d} = {big};", f"{self.mix} = {self.mix} + {d};"]
        # nested control flow around a plain update
        d = self.names.fresh("scalar")
        self.decls.append(f"int {d} = {self.rng.randint(0, 5)};")
        return [f"if ({self.arg} < {self.rng.randint(10, 99)})",
                "{", f"if ({d} < {self.rng.randint(2, 9)})",
                "{", f"{d} = {d} + 2;", "}", "}",
                f"{self.mix} = {self.mix} + {d};"]

    def distractors(self, min_lines: int, max_lines: int) -> list[str]:
        lines: list[str] = []
        target = self.rng.randint(min_lines, max_lines) if max_lines else 0
        while len(lines) < target:
            if self.hard and self.rng.random() < 0.45:
                lines.extend(self._heavy_unit())
            else:
                lines.extend(self._light_unit())
        return lines


@dataclass
class _Blueprint:
    setup: list[str]      # lines that must precede the flaw
    vuln_unit: list[str]  # the unit containing the flawed line
    safe_unit: list[str]  # identical except at unit_offset
    unit_offset: int      # index of the differing line within the unit
    tail: list[str]       # lines after the unit (identical in both twins)
    result: str           # variable the function returns


def _tpl_buffer_overrun(b: _Builder) -> _Blueprint:
    """Loop write past the end; hard mode varies loop kind, offset form, and
    can route the bound through a variable so the size needs value tracking."""
    arr = b.names.fresh("array")
    i = b.names.fresh("index")
    acc = b.names.fresh("scalar")
    sz = b.rng.choice([4, 8, 16, 32])
    off = b.rng.randint(1, 2)
    b.decls.append(f"int {arr}[{sz}];")
    b.decls.append(f"int {i};")
    b.decls.append(f"int {acc} = 0;")
    setup = []
    bound = str(sz)
    offset_expr = f"{i} + {off}"
    loop_kind = "for"
    if b.hard:
        offset_expr = b.rng.choice([f"{i} + {off}", f"{off} + {i}"])
        loop_kind = b.rng.choice(["for", "while"])
        if b.rng.random() < 0.5:  # bound carried by a variable set far away
            lim = b.names.fresh("scalar")
            b.decls.append(f"int {lim};")
            setup.append(f"{lim} = {sz};")
            bound = lim
    write_vuln = f"{arr}[{offset_expr}] = {b.arg} + {i};"
    write_safe = f"{arr}[{i}] = {b.arg} + {i};"
    if loop_kind == "for":
        loop = [f"for ({i} = 0; {i} < {bound}; {i} = {i} + 1)", "{"]
        vuln = loop + [write_vuln, "}"]
        safe = loop + [write_safe, "}"]
        offset = 2
    else:
        setup.append(f"{i} = 0;")
        loop = [f"while ({i} < {bound})", "{"]
        step = f"{i} = {i} + 1;"
        vuln = loop + [write_vuln, step, "}"]
        safe = loop + [write_safe, step, "}"]
        offset = 2
    tail = [f"{acc} = {acc} + {arr}[0];"]
    return _Blueprint(setup, vuln, safe, offset, tail, acc)


def _tpl_integer_overflow(b: _Builder) -> _Blueprint:
    """Product with a huge factor; hard mode can hide the factor behind a
    variable assigned far above and varies the operand order."""
    lim = b.names.fresh("scalar")
    x = b.names.fresh("scalar")
    b.decls.append(f"int {lim};")
    b.decls.append(f"int {x};")
    big = b.rng.choice([65536, 100000, 524288, 1048576, 4194304])
    small = b.rng.randint(2, 8)
    setup = [f"{lim} = {b.arg} + {b.rng.randint(1, 9)};"]
    big_expr = str(big)
    if b.hard:
        if b.rng.random() < 0.5:
            scale = b.names.fresh("scalar")
            b.decls.append(f"int {scale};")
            setup.insert(0, f"{scale} = {big};")
            big_expr = scale
            # a benign additive use of the same huge value elsewhere
            if b.rng.random() < 0.5:
                soft = b.names.fresh("scalar")
                b.decls.append(f"int {soft};")
                setup.append(f"{soft} = {b.arg} + {big_expr};")
                setup.append(f"{b.mix} = {b.mix} + {soft};")
        if b.rng.random() < 0.5:
            vuln = [f"{x} = {big_expr} * {lim};"]
            safe = [f"{x} = {small} * {lim};"]
            return _Blueprint(setup, vuln, safe, 0, [], x)
    vuln = [f"{x} = {lim} * {big_expr};"]
    safe = [f"{x} = {lim} * {small};"]
    return _Blueprint(setup, vuln, safe, 0, [], x)


def _tpl_divide_by_zero(b: _Builder) -> _Blueprint:
    """Division by a zero-valued variable; hard mode computes the zero
    (x - x, 0 * k) instead of storing a literal and varies the numerator."""
    den = b.names.fresh("scalar")
    out = b.names.fresh("scalar")
    b.decls.append(f"int {den};")
    b.decls.append(f"int {out};")
    k = b.rng.randint(1, 7)
    zero_form = "0"
    if b.hard:
        roll = b.rng.random()
        if roll < 0.4:
            zero_form = "0"
        elif roll < 0.7:
            zero_form = f"{b.arg} - {b.arg}"
        else:
            zero_form = f"0 * {b.rng.randint(2, 9)}"
    setup = [f"{den} = {zero_form};"]
    numerator = b.arg
    if b.hard and b.rng.random() < 0.5:
        num = b.names.fresh("scalar")
        b.decls.append(f"int {num};")
        setup.append(f"{num} = {b.arg} + {b.rng.randint(1, 9)};")
        numerator = num
    vuln = [f"{out} = {numerator} / {den};"]
    safe = [f"{out} = {numerator} / ({den} + {k});"]
    return _Blueprint(setup, vuln, safe, 0, [], out)


def _tpl_null_dereference(b: _Builder) -> _Blueprint:
    """Write (or, in hard mode, sometimes read) through a null pointer.

    Both twins read both pointers: a benign write through the valid one and
    a null check on the other, so neither setup line goes dead in a twin.
    """
    val = b.names.fresh("scalar")
    good = b.names.fresh("pointer")
    bad = b.names.fresh("pointer")
    b.decls.append(f"int {val};")
    b.decls.append(f"int *{good};")
    b.decls.append(f"int *{bad};")
    k1, k2 = b.rng.randint(1, 9), b.rng.randint(1, 9)
    setup = [
        f"{val} = {b.arg};",
        f"{good} = &{val};",
        f"{bad} = 0;",
        f"*{good} = {b.arg} + {k1};",
        f"if ({bad} == 0)",
        "{",
        f"{val} = {val} + 1;",
        "}",
    ]
    if b.hard and b.rng.random() < 0.5:  # read through the null pointer
        sink = b.names.fresh("scalar")
        b.decls.append(f"int {sink};")
        vuln = [f"{sink} = *{bad} + {k2};"]
        safe = [f"{sink} = *{good} + {k2};"]
        tail = [f"{val} = {val} + {sink};"]
        return _Blueprint(setup, vuln, safe, 0, tail, val)
    vuln = [f"*{bad} = {val} + {k2};"]
    safe = [f"*{good} = {val} + {k2};"]
    return _Blueprint(setup, vuln, safe, 0, [], val)


def _tpl_uninitialized_value(b: _Builder) -> _Blueprint:
    """Read of a never-assigned local; hard mode varies the consuming
    expression shape."""
    raw = b.names.fresh("scalar")
    ready = b.names.fresh("scalar")
    out = b.names.fresh("scalar")
    b.decls.append(f"int {raw};")
    b.decls.append(f"int {ready};")
    b.decls.append(f"int {out};")
    mul = b.rng.randint(2, 5)
    setup = [f"{ready} = {b.arg} + {b.rng.randint(1, 9)};"]
    forms = [(f"{{v}} * {mul}", f"{{v}} * {mul}")]
    if b.hard:
        forms = [
            (f"{{v}} * {mul}", f"{{v}} * {mul}"),
            (f"{{v}} + {b.arg}", f"{{v}} + {b.arg}"),
            (f"({{v}} + 1) / {mul}", f"({{v}} + 1) / {mul}"),
            (f"{b.arg} - {{v}}", f"{b.arg} - {{v}}"),
        ]
    vf, sf = b.rng.choice(forms)
    vuln = [f"{out} = {vf.format(v=raw)};"]
    safe = [f"{out} = {sf.format(v=ready)};"]
    tail = [f"{out} = {out} + {ready};"]  # keeps ready live in the vuln twin
    return _Blueprint(setup, vuln, safe, 0, tail, out)


def _tpl_dead_store(b: _Builder) -> _Blueprint:
    """Store whose value is never read; hard mode varies the stored
    expression."""
    keep = b.names.fresh("scalar")
    waste = b.names.fresh("scalar")
    b.decls.append(f"int {keep};")
    b.decls.append(f"int {waste};")
    k = b.rng.randint(2, 9)
    setup = [f"{keep} = {b.arg} + {b.rng.randint(1, 5)};"]
    expr = f"{keep} + {k}"
    if b.hard:
        # every form reads `keep` so the safe twin never kills the setup store
        expr = b.rng.choice([f"{keep} + {k}", f"{keep} * {k}",
                             f"{keep} - {b.arg}", f"{k} + {keep}"])
    vuln = [f"{waste} = {expr};"]        # never read again
    safe = [f"{keep} = {expr};"]
    tail = [f"{keep} = {keep} + {b.arg};"]
    return _Blueprint(setup, vuln, safe, 0, tail, keep)


_TEMPLATES = {
    "BufferOverrun": _tpl_buffer_overrun,
    "IntegerOverflow": _tpl_integer_overflow,
    "DivideByZero": _tpl_divide_by_zero,
    "NullDereference": _tpl_null_dereference,
    "UninitializedValue": _tpl_uninitialized_value,
    "DeadStore": _tpl_dead_store,
}


def _indent(lines: list[str]) -> list[str]:
    out = []
    depth = 1
    for line in lines:
        if line == "}":
            depth -= 1
        out.append("    " * depth + line)
        if line == "{":
            depth += 1
    return out


def generate_pair(kind: str, name: str, rng: random.Random,
                  difficulty: str) -> tuple[str, str, int]:
    """(vulnerable source, safe twin source, vulnerable 1-based line)."""
    hard = difficulty == "hard"
    b = _Builder(rng, hard)
    arg = b.arg
    bp = _TEMPLATES[kind](b)

    pre = b.distractors(2, 10) if hard else b.distractors(0, 3)
    gap = b.distractors(10, 20) if hard else b.distractors(0, 4)
    post = b.distractors(0, 8) if hard else b.distractors(0, 2)

    wrap = hard and rng.random() < 0.4
    vuln_unit, safe_unit, offset = bp.vuln_unit, bp.safe_unit, bp.unit_offset
    if wrap:
        guard = [f"if ({arg} < {rng.randint(100, 999)})", "{"]
        vuln_unit = guard + vuln_unit + ["}"]
        safe_unit = guard + safe_unit + ["}"]
        offset += 2

    def body(unit):
        return (b.decls + pre + bp.setup + gap + unit + bp.tail + post
                + [f"return {bp.result} + {b.mix};"])

    prefix = [f"int {name}(int {arg})", "{"]
    vuln_lines = prefix + _indent(body(vuln_unit)) + ["}"]
    safe_lines = prefix + _indent(body(safe_unit)) + ["}"]
    unit_start = len(prefix) + len(b.decls) + len(pre) + len(bp.setup) + len(gap)
    vuln_line = unit_start + offset + 1  # 1-based
    assert vuln_lines[vuln_line - 1] != safe_lines[vuln_line - 1]
    return "\n".join(vuln_lines) + "\n", "\n".join(safe_lines) + "\n", vuln_line


def _allocate(total: int, weights: dict) -> list[str]:
    kinds = sorted(weights)
    quotas = [weights[k] * total for k in kinds]
    sizes = [int(q) for q in quotas]
    leftover = total - sum(sizes)
    order = sorted(range(len(kinds)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in range(leftover):
        sizes[order[i % len(kinds)]] += 1
    out = []
    for kind, n in zip(kinds, sizes):
        out.extend([kind] * n)
    return out


def generate_corpus(spec: CorpusSpec, out_dir) -> list[dict]:
    """Write sources + manifest.jsonl under out_dir; return manifest entries.

    Twins are emitted adjacently (vulnerable first) with consecutive
    timestamps, so temporal splits keep both classes throughout.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)

    n_vuln = int(round(spec.count * spec.vulnerable_fraction))
    n_safe = spec.count - n_vuln
    n_pairs = max(n_vuln, n_safe)
    kinds = _allocate(n_pairs, spec.weights)
    rng.shuffle(kinds)

    entries: list[dict] = []
    ts = spec.timestamp_start
    emitted_v = emitted_s = 0
    for pair_idx, kind in enumerate(kinds):
        name = f"{spec.difficulty}_fn_{spec.seed}_{pair_idx:05d}"
        vuln_src, safe_src, vuln_line = generate_pair(
            kind, name, rng, spec.difficulty)
        for src, vulnerable in ((vuln_src, True), (safe_src, False)):
            if vulnerable and emitted_v >= n_vuln:
                continue
            if not vulnerable and emitted_s >= n_safe:
                continue
            digest = hashlib.sha256(src.encode()).hexdigest()
            rel = Path(digest[:2]) / f"{digest[2:18]}.c"
            path = out_dir / rel
            path.parent.mkdir(exist_ok=True)
            path.write_text(src)
            entries.append({
                "path": str(rel),
                "vulnerable": vulnerable,
                "line": vuln_line if vulnerable else None,
                "kind": kind,
                "commit_ts": ts,
            })
            ts += 1
            if vulnerable:
                emitted_v += 1
            else:
                emitted_s += 1

    with open(out_dir / "manifest.jsonl", "w") as fh:
        for e in entries:
            fh.write(json.dumps(e, separators=(",", ":")) + "\n")
    return entries


def load_manifest(path) -> list[dict]:
    entries = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def manifest_to_samples(entries: list[dict], root,
                        max_nodes: int = 512) -> tuple[list, list[dict]]:
    """Parse, graph, and annotate every manifest entry.

    Returns (samples, skipped); oversized graphs are skipped and reported,
    any other front-end failure is re-raised with the file named.
    """
    root = Path(root)
    samples = []
    skipped = []
    for e in entries:
        path = root / e["path"]
        source = path.read_text()
        try:
            ast = parse_source(source)
            graph = build_cpg(ast, max_nodes=max_nodes)
            samples.append(annotate(graph, e["line"],
                                    commit_ts=e["commit_ts"],
                                    source_path=e["path"]))
        except GraphTooLarge as exc:
            skipped.append({"path": e["path"], "reason": str(exc)})
        except Exception as exc:
            raise type(exc)(f"{path}: {exc}") from exc
    return samples, skipped
