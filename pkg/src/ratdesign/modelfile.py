"""JSON model and result files.

A model file is a JSON object with keys

* ``space``: list of ``[a, b]`` pairs (``a == b`` for a single point),
* ``basis``: list of expressions in ``t``, or an integer ``n`` meaning
  degree ``0..n`` in the family named by ``basis_mode``
  (``"monomial"`` or ``"legendre"``),
* ``nonlinear``: ``{"f": expression in t and theta1.., "theta_star": [...]}``
  in place of ``basis``,
* ``weight``: expression in ``t`` (default ``"1"``),
* ``criterion``: ``"E"``, ``"A"``, ``"D"`` or ``{"custom": {...}}``,
* ``K``: optional ``m x s`` matrix,
* ``settings``: optional overrides for ``tol``, ``max_iters``, ``root_tol``,
  ``rescale_lambda``,
* ``name``, ``description``, ``labels``: free text.

Errors carry the line and column of the offending value.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import legendre as npleg

from .criteria import CriterionRepresentation, custom_representation, represent
from .exprmodel import (
    ExprSyntaxError,
    ModelError,
    NonlinearModel,
    RegressionModel,
    gradient_exprs,
    linearize,
    parse,
    to_rational,
)
from .polycore import MONOMIAL, DesignSpace, Polynomial, RationalFunction

KNOWN_KEYS = {"name", "description", "space", "basis", "basis_mode", "nonlinear", "weight", "criterion", "K", "settings", "labels"}
SETTING_KEYS = {"tol", "max_iters", "root_tol", "rescale_lambda"}
MODELS_DIR = Path(__file__).resolve().parent / "models"


class ModelFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, source: str = "<model>"):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = source if line is None else f"{source}:{line}:{column}"
        super().__init__(f"{where}: {message}")


# --------------------------------------------------------------------------
# JSON with value positions


class _Located(json.JSONDecoder):
    """Decoder that records the start offset of every value in document order."""

    def __init__(self):
        super().__init__(object_pairs_hook=self._pairs)
        self.starts = []

        def scan(s, idx):
            self.starts.append(idx)
            return inner(s, idx)

        # containers must hand the recording scanner to their children
        base_object, base_array = self.parse_object, self.parse_array
        self.parse_object = lambda s_end, strict, _scan, *rest: base_object(s_end, strict, scan, *rest)
        self.parse_array = lambda s_end, _scan, *rest: base_array(s_end, scan, *rest)
        inner = json.scanner.py_make_scanner(self)
        self.scan_once = scan
        self.duplicate = None

    def _pairs(self, pairs):
        seen = set()
        for k, _ in pairs:
            if k in seen and self.duplicate is None:
                self.duplicate = k
            seen.add(k)
        return dict(pairs)


def _walk(value, path, out):
    out.append(path)
    if isinstance(value, dict):
        for k, v in value.items():
            _walk(v, path + (k,), out)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _walk(v, path + (i,), out)


@dataclass
class LocatedDocument:
    data: object
    text: str
    positions: dict
    source: str

    def where(self, path) -> tuple:
        """``(line, column)`` of the value at ``path`` (or its nearest located ancestor)."""
        path = tuple(path)
        while path not in self.positions and path:
            path = path[:-1]
        idx = self.positions.get(path, 0)
        line = self.text.count("\n", 0, idx) + 1
        col = idx - (self.text.rfind("\n", 0, idx) + 1) + 1
        return line, col

    def error(self, path, message: str) -> ModelFileError:
        line, col = self.where(path)
        return ModelFileError(message, line, col, self.source)


def load_document(text: str, source: str = "<model>") -> LocatedDocument:
    dec = _Located()
    try:
        idx = json.decoder.WHITESPACE.match(text, 0).end()
        data, end = dec.raw_decode(text, idx)
    except json.JSONDecodeError as exc:
        raise ModelFileError(exc.msg, exc.lineno, exc.colno, source) from None
    rest = json.decoder.WHITESPACE.match(text, end).end()
    if rest != len(text):
        line = text.count("\n", 0, rest) + 1
        raise ModelFileError("extra data after the JSON document", line, rest - text.rfind("\n", 0, rest), source)
    paths = []
    _walk(data, (), paths)
    doc = LocatedDocument(data, text, dict(zip(paths, dec.starts)), source)
    if dec.duplicate is not None:
        raise doc.error((), f"duplicate key {dec.duplicate!r}")
    return doc


# --------------------------------------------------------------------------
# model files


@dataclass
class ModelSpec:
    """A parsed model file."""

    model: RegressionModel
    criterion: object
    criterion_name: str
    K: np.ndarray | None = None
    settings: dict = field(default_factory=dict)
    name: str = ""
    nonlinear: NonlinearModel | None = None
    theta_star: tuple = ()
    data: dict = field(default_factory=dict)


def _number(doc, path, value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise doc.error(path, f"{what} must be a number")
    if not np.isfinite(value):
        raise doc.error(path, f"{what} must be finite")
    return float(value)


def _expr(doc, path, text, param_count=0):
    if not isinstance(text, str):
        raise doc.error(path, "expected an expression string")
    try:
        return parse(text, param_count)
    except ExprSyntaxError as exc:
        line, col = doc.where(path)
        # the string body starts one character after the opening quote
        raise ModelFileError(str(exc).rsplit(" (column", 1)[0], line, col + 1 + exc.pos, doc.source) from None


def _rational(doc, path, text, theta=()):
    e = _expr(doc, path, text, len(theta))
    try:
        return to_rational(e, theta)
    except ModelError as exc:
        raise doc.error(path, str(exc)) from None


def _space(doc):
    raw = doc.data.get("space")
    if not isinstance(raw, list) or not raw:
        raise doc.error(("space",), "space must be a nonempty list of [a, b] pairs")
    ivs = []
    for i, iv in enumerate(raw):
        p = ("space", i)
        if isinstance(iv, (int, float)) and not isinstance(iv, bool):
            iv = [iv, iv]
        if not isinstance(iv, list) or len(iv) != 2:
            raise doc.error(p, "each interval must be a pair [a, b]")
        a = _number(doc, p + (0,), iv[0], "interval end")
        b = _number(doc, p + (1,), iv[1], "interval end")
        if a > b:
            raise doc.error(p, f"interval [{a}, {b}] has a > b")
        ivs.append((a, b))
    try:
        return DesignSpace(tuple(ivs))
    except ValueError as exc:
        raise doc.error(("space",), str(exc)) from None


def family_basis(n: int, mode: str) -> tuple:
    """Degree ``0..n`` monomials or Legendre polynomials as rational functions."""
    out = []
    for k in range(n + 1):
        e = np.zeros(k + 1)
        e[k] = 1.0
        c = e if mode == "monomial" else npleg.leg2poly(e)
        out.append(RationalFunction(Polynomial(np.asarray(c, dtype=float))))
    return tuple(out)


def _criterion(doc, s):
    raw = doc.data.get("criterion", "E")
    if isinstance(raw, str):
        try:
            return raw.upper(), represent(raw, s)
        except ValueError as exc:
            raise doc.error(("criterion",), str(exc)) from None
    if isinstance(raw, dict) and "custom" in raw:
        try:
            rep = custom_representation(raw["custom"], s)
        except (KeyError, TypeError, ValueError) as exc:
            raise doc.error(("criterion", "custom"), f"invalid custom representation: {exc}") from None
        return rep.name, rep
    raise doc.error(("criterion",), 'criterion must be "E", "A", "D" or {"custom": {...}}')


def parse_model(text: str, source: str = "<model>") -> ModelSpec:
    """Parse and validate a model document.

    Raises
    ------
    ModelFileError
        With line and column of the offending value.
    """
    doc = load_document(text, source)
    data = doc.data
    if not isinstance(data, dict):
        raise doc.error((), "a model file must be a JSON object")
    for k in data:
        if k not in KNOWN_KEYS:
            raise doc.error((k,), f"unknown key {k!r}")
    space = _space(doc)
    weight = _rational(doc, ("weight",), data.get("weight", "1"))
    mode = data.get("basis_mode", "monomial")
    if mode not in ("monomial", "legendre"):
        raise doc.error(("basis_mode",), 'basis_mode must be "monomial" or "legendre"')
    nonlinear, theta = None, ()
    if ("basis" in data) == ("nonlinear" in data):
        raise doc.error((), 'give exactly one of "basis" and "nonlinear"')
    try:
        if "nonlinear" in data:
            nl = data["nonlinear"]
            if not isinstance(nl, dict) or "f" not in nl or "theta_star" not in nl:
                raise doc.error(("nonlinear",), 'nonlinear needs "f" and "theta_star"')
            ts = nl["theta_star"]
            if not isinstance(ts, list) or not ts:
                raise doc.error(("nonlinear", "theta_star"), "theta_star must be a nonempty list of numbers")
            theta = tuple(_number(doc, ("nonlinear", "theta_star", i), v, "theta_star entry") for i, v in enumerate(ts))
            f = _expr(doc, ("nonlinear", "f"), nl["f"], len(theta))
            nonlinear = NonlinearModel(f, len(theta), space, weight)
            model = linearize(nonlinear, theta)
        else:
            raw = data["basis"]
            if isinstance(raw, int) and not isinstance(raw, bool):
                if raw < 0:
                    raise doc.error(("basis",), "basis degree must be nonnegative")
                basis = family_basis(raw, mode)
            elif isinstance(raw, list) and raw:
                basis = tuple(_rational(doc, ("basis", i), b) for i, b in enumerate(raw))
            else:
                raise doc.error(("basis",), "basis must be a nonempty list of expressions or a degree")
            labels = data.get("labels", ())
            model = RegressionModel(basis, weight, space, tuple(labels)).validate()
    except ModelError as exc:
        key = "nonlinear" if "nonlinear" in data else "basis"
        raise doc.error((key,), str(exc)) from None
    K = None
    if "K" in data:
        try:
            K = np.atleast_2d(np.asarray(data["K"], dtype=float))
        except (TypeError, ValueError):
            raise doc.error(("K",), "K must be a numeric matrix") from None
        if K.ndim != 2 or K.shape[0] != model.m or not np.all(np.isfinite(K)):
            raise doc.error(("K",), f"K must be a finite matrix with {model.m} rows")
    s = model.m if K is None else K.shape[1]
    cname, rep = _criterion(doc, s)
    settings = data.get("settings", {})
    if not isinstance(settings, dict):
        raise doc.error(("settings",), "settings must be an object")
    for k, v in settings.items():
        if k not in SETTING_KEYS:
            raise doc.error(("settings", k), f"unknown setting {k!r}")
        if v is not None:
            _number(doc, ("settings", k), v, k)
    return ModelSpec(model, rep, cname, K, dict(settings), str(data.get("name", "")), nonlinear, theta, data)


def model_path(name_or_path) -> Path:
    """Resolve a file path, falling back to the shipped model of that name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = MODELS_DIR / (p.name if p.suffix == ".json" else p.name + ".json")
    if shipped.exists():
        return shipped
    raise ModelFileError("no such model file", source=str(name_or_path))


def load_model(path) -> ModelSpec:
    p = model_path(path)
    return parse_model(p.read_text(), str(p))


def shipped_models() -> list:
    return sorted(p.stem for p in MODELS_DIR.glob("*.json"))


# --------------------------------------------------------------------------
# writing expressions and linearised models


def polynomial_text(p: Polynomial) -> str:
    if p.basis != MONOMIAL:
        raise ValueError("expected a monomial-basis polynomial")
    terms = []
    for k, c in enumerate(p.coeffs):
        if c == 0.0 and p.degree > 0:
            continue
        mono = "" if k == 0 else ("t" if k == 1 else f"t^{k}")
        if mono and c == 1.0:
            terms.append(mono)
        elif mono and c == -1.0:
            terms.append(f"-{mono}")
        else:
            terms.append(repr(float(c)) + (f"*{mono}" if mono else ""))
    text = " + ".join(terms).replace("+ -", "- ")
    return text


def rational_text(r: RationalFunction) -> str:
    """Expression text that parses back to ``r``."""
    if not r.den_factors:
        return polynomial_text(r.num)
    # monic denominator factors read more naturally: t/(t + 2) rather than 0.5t/(1 + 0.5t)
    num = r.num
    parts = []
    for f, k in r.den_factors:
        lead = float(f.coeffs[-1])
        num = num.scaled(lead ** (-k))
        parts.append(f"({polynomial_text(f.scaled(1.0 / lead))})" + (f"^{k}" if k != 1 else ""))
    return f"({polynomial_text(num)})/({'*'.join(parts)})"


def linearized_document(spec: ModelSpec) -> dict:
    """Model file for the locally linearised model of a nonlinear model file."""
    if spec.nonlinear is None:
        raise ValueError("model file has no nonlinear block")
    out = {k: v for k, v in spec.data.items() if k not in ("nonlinear", "basis_mode", "labels")}
    out["basis"] = [rational_text(f) for f in spec.model.basis]
    out["labels"] = list(spec.model.labels)
    out["description"] = (
        f"gradient of {spec.data['nonlinear']['f']} at theta* = {list(spec.theta_star)}"
    )
    return out


def gradient_texts(spec: ModelSpec) -> list:
    from .exprmodel import to_text

    return [to_text(g) for g in gradient_exprs(spec.nonlinear)]


# --------------------------------------------------------------------------
# result files


def load_result(path) -> dict:
    p = Path(path)
    try:
        doc = load_document(p.read_text(), str(p))
    except OSError as exc:
        raise ModelFileError(str(exc), source=str(p)) from None
    data = doc.data
    for key in ("support", "weights", "dual_y", "pi"):
        if not isinstance(data, dict) or key not in data:
            raise doc.error((), f"result file lacks {key!r}")
    return data


def pi_from_dict(d: dict) -> Polynomial:
    return Polynomial(np.asarray(d["coefficients"], dtype=float), d.get("basis", MONOMIAL), tuple(d.get("domain", (-1.0, 1.0))))


def pi_to_dict(p: Polynomial) -> dict:
    return {"basis": p.basis, "domain": list(p.domain), "coefficients": [float(c) for c in p.coeffs]}
