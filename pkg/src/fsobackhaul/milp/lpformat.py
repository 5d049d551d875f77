"""CPLEX-style LP text export/import and ``name value`` solution vectors."""

from __future__ import annotations

import math
from pathlib import Path as FilePath
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

from .model import MilpModel, Sense, VarType

LINE_WIDTH = 200


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _terms(pairs: Iterable[Tuple[float, str]], head: str) -> List[str]:
    lines, line = [], head
    for coef, name in pairs:
        term = f" {'-' if coef < 0 else '+'} {_num(abs(coef))} {name}"
        if len(line) + len(term) > LINE_WIDTH:
            lines.append(line)
            line = "   "
        line += term
    lines.append(line)
    return lines


def export_model_text(model: MilpModel) -> str:
    """Render ``model`` in LP text format; output is byte-deterministic."""
    names = [v.name for v in model.variables]
    out = [f"\\ Problem: {model.name}", "Minimize"]
    obj = [(model.objective[j], names[j]) for j in sorted(model.objective)]
    lines = _terms(obj, " obj:")
    if model.constant:
        lines[-1] += f" {'-' if model.constant < 0 else '+'} {_num(abs(model.constant))}"
    elif not obj:
        lines[-1] += " 0"
    out += lines
    out.append("Subject To")
    for con in model.constraints:
        pairs = list(zip(con.coefs, (names[j] for j in con.indices)))
        if not pairs:
            pairs = [(0.0, names[0])]
        lines = _terms(pairs, f" {con.name}:")
        lines[-1] += f" {con.sense.value} {_num(con.rhs)}"
        out += lines
    out.append("Bounds")
    for v in model.variables:
        lo, hi = v.lb, v.ub
        if math.isinf(lo) and math.isinf(hi):
            out.append(f" {v.name} free")
        elif math.isinf(hi):
            out.append(f" {v.name} >= {_num(lo)}")
        elif math.isinf(lo):
            out.append(f" -inf <= {v.name} <= {_num(hi)}")
        else:
            out.append(f" {_num(lo)} <= {v.name} <= {_num(hi)}")
    generals = [v.name for v in model.variables if v.vtype is VarType.INTEGER]
    binaries = [v.name for v in model.variables if v.vtype is VarType.BINARY]
    if generals:
        out.append("Generals")
        out += [f" {n}" for n in generals]
    if binaries:
        out.append("Binaries")
        out += [f" {n}" for n in binaries]
    out.append("End")
    return "\n".join(out) + "\n"


_SECTIONS = {
    "minimize": "obj", "subject to": "rows", "bounds": "bounds",
    "generals": "gen", "general": "gen", "binaries": "bin", "binary": "bin", "end": "end",
}


def _linear(tokens: Sequence[str]) -> Tuple[List[Tuple[float, str]], float]:
    terms, constant, sign, i = [], 0.0, 1.0, 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
            i += 1
            continue
        coef = float(tok)
        if i + 1 < len(tokens) and tokens[i + 1] not in "+-":
            terms.append((sign * coef, tokens[i + 1]))
            i += 2
        else:
            constant += sign * coef
            i += 1
        sign = 1.0
    return terms, constant


def parse_model_text(text: str) -> MilpModel:
    """Parse LP text written by :func:`export_model_text`."""
    name = "model"
    sections: Dict[str, List[str]] = {k: [] for k in ("obj", "rows", "bounds", "gen", "bin")}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if raw.startswith("\\"):
            if raw.startswith("\\ Problem:"):
                name = raw.split(":", 1)[1].strip()
            continue
        key = _SECTIONS.get(line.lower())
        if key == "end":
            break
        if key is not None:
            current = key
            continue
        if line:
            sections[current].append(line)

    def statements(lines: List[str]) -> List[List[str]]:
        stmts: List[List[str]] = []
        for tok in " ".join(lines).split():
            if tok.endswith(":"):
                stmts.append([tok[:-1]])
            else:
                stmts[-1].append(tok)
        return stmts

    bounds: Dict[str, Tuple[float, float]] = {}
    order: List[str] = []
    for line in sections["bounds"]:
        tok = line.split()
        if len(tok) == 2 and tok[1] == "free":
            nm, lo, hi = tok[0], -math.inf, math.inf
        elif len(tok) == 3 and tok[1] == ">=":
            nm, lo, hi = tok[0], float(tok[2]), math.inf
        elif len(tok) == 5:
            nm, lo, hi = tok[2], float(tok[0]), float(tok[4])
        else:
            raise ValueError(f"cannot parse bound line {line!r}")
        bounds[nm] = (lo, hi)
        order.append(nm)
    vtypes = {n: VarType.INTEGER for n in sections["gen"]}
    vtypes.update({n: VarType.BINARY for n in sections["bin"]})

    model = MilpModel(name)
    index = {nm: model.add_var(nm, *bounds[nm], vtypes.get(nm, VarType.CONTINUOUS)) for nm in order}
    (obj_stmt,) = statements(sections["obj"])
    terms, constant = _linear(obj_stmt[1:])
    model.set_objective([(index[n], c) for c, n in terms], constant)
    for stmt in statements(sections["rows"]):
        cname, body = stmt[0], stmt[1:]
        sense, rhs = body[-2], float(body[-1])
        terms, _ = _linear(body[:-2])
        row = [(index[n], c) for c, n in terms]
        if all(c == 0.0 for _, c in row):
            row = []
        model.add_constr(row, Sense(sense), rhs, cname)
    return model


def write_solution_vector(model: MilpModel, x: Sequence[float], path: Union[str, FilePath]) -> None:
    lines = [f"{v.name} {_num(float(val))}" for v, val in zip(model.variables, x)]
    FilePath(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_solution_vector(model: MilpModel, source: Union[str, FilePath, Iterable[str]]) -> List[float]:
    """Read ``name value`` lines into a value list ordered like ``model``'s variables.

    Variables missing from the file default to 0.
    """
    if isinstance(source, (str, FilePath)) and FilePath(source).exists():
        lines = FilePath(source).read_text(encoding="utf-8").splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = list(source)
    x = [0.0] * model.num_vars
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, value = line.split()
        x[model.var_index(name)] = float(value)
    return x
