"""
Shared domain types, validation and CSV ingestion.

Choice data is held in long format: one row per (respondent, task,
alternative).  Dummy attributes are stored as level indices (0 is the
reference level), continuous attributes as their numeric value.  Model
matrices are produced on demand by :meth:`ChoiceDataset.design_tensor`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DCEError", "ValidationError", "ParseError", "RankDeficiencyError",
    "AttributeSpec", "ChoiceCard", "ChoiceDataset", "ModelSpec",
    "EstimationResult", "AttitudeDataset", "default_attributes",
    "load_choice_csv", "write_choice_csv", "write_result_csv",
    "read_result_csv", "load_attitude_csv", "write_attitude_csv",
    "read_model_spec", "read_attributes", "read_flat_config",
    "format_number", "CHOICE_BASE_COLUMNS", "ATTITUDE_COLUMNS",
]

CHOICE_BASE_COLUMNS = ("resp_id", "task_id", "alt_id", "chosen")
N_ITEMS = 16
ATTITUDE_COVARIATES = ("age", "female", "tourist", "education", "income",
                       "fix_income", "campaign")
ATTITUDE_COLUMNS = (("resp_id",) + tuple(f"q{i}" for i in range(1, N_ITEMS + 1))
                    + ATTITUDE_COVARIATES + ("town",))
MISSING = ("", "NA", "na", "NaN", "nan")


class DCEError(Exception):
    """Base class for errors raised by dcekit."""


class ValidationError(DCEError, ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RankDeficiencyError(DCEError, np.linalg.LinAlgError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("design matrix is rank deficient; collinear columns: "
                         + ", ".join(self.columns))


def format_number(x) -> str:
    """Shortest round-tripping decimal representation (never exponent form)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return np.format_float_positional(x, unique=True, trim="-")


# ---------------------------------------------------------------------------
# attributes and cards
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeSpec:
    """One experimental attribute.

    Dummy attributes with L levels expand into L-1 indicator columns
    (``name`` itself when L == 2); continuous attributes give one column
    holding ``continuous_values[level]``.
    """
    name: str
    levels: tuple
    coding: str = "dummy"
    continuous_values: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if not self.name.isidentifier():
            raise ValidationError(f"attribute name {self.name!r} is not an identifier")
        if len(self.levels) < 2:
            raise ValidationError(f"attribute {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValidationError(f"attribute {self.name!r} has duplicate level labels")
        if self.coding not in ("dummy", "continuous"):
            raise ValidationError(f"unknown coding {self.coding!r}")
        if self.coding == "continuous":
            if self.continuous_values is None:
                raise ValidationError(f"continuous attribute {self.name!r} needs values")
            vals = tuple(float(v) for v in self.continuous_values)
            if len(vals) != len(self.levels):
                raise ValidationError(f"attribute {self.name!r}: one value per level required")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValidationError(f"attribute {self.name!r}: values must increase strictly")
            object.__setattr__(self, "continuous_values", vals)
        elif self.continuous_values is not None:
            raise ValidationError(f"dummy attribute {self.name!r} cannot carry values")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def columns(self) -> list[str]:
        if self.coding == "continuous" or self.n_levels == 2:
            return [self.name]
        return [f"{self.name}_{lab}" for lab in self.levels[1:]]

    def value_of(self, level):
        """Raw stored value (CSV value) for a level index."""
        if self.coding == "continuous":
            return self.continuous_values[level]
        return level

    def level_of(self, value) -> int:
        """Inverse of :meth:`value_of`; raises ValueError for undeclared values."""
        if self.coding == "continuous":
            for i, v in enumerate(self.continuous_values):
                if abs(v - value) <= 1e-9 * max(1.0, abs(v)):
                    return i
            raise ValueError(f"{value!r} is not a declared value of {self.name}")
        iv = int(round(value))
        if iv != value or not 0 <= iv < self.n_levels:
            raise ValueError(f"{value!r} is not a level index of {self.name}")
        return iv

    def levels_of(self, values) -> np.ndarray:
        """Vectorised :meth:`level_of`; undeclared values map to -1."""
        values = np.asarray(values, dtype=float)
        values = np.where(np.isfinite(values), values, -1.5)
        if self.coding == "continuous":
            ref = np.asarray(self.continuous_values)
            idx = np.clip(np.searchsorted(ref, values), 0, len(ref) - 1)
            best = idx.copy()
            lower = np.clip(idx - 1, 0, None)
            closer = np.abs(ref[lower] - values) < np.abs(ref[idx] - values)
            best[closer] = lower[closer]
            ok = np.abs(ref[best] - values) <= 1e-9 * np.maximum(1.0, np.abs(ref[best]))
        else:
            best = np.rint(values).astype(int)
            ok = (best == values) & (best >= 0) & (best < self.n_levels)
        return np.where(ok, best, -1)

    def encode_levels(self, levels) -> np.ndarray:
        """Coded columns for an array of level indices, shape (n, len(columns))."""
        levels = np.asarray(levels, dtype=int)
        if self.coding == "continuous":
            return np.asarray(self.continuous_values)[levels][:, None]
        if self.n_levels == 2:
            return levels[:, None].astype(float)
        return (levels[:, None] == np.arange(1, self.n_levels)[None, :]).astype(float)


def default_attributes() -> list[AttributeSpec]:
    """Shrimp-dish grammar: five binary attributes and a four-level price."""
    return [
        AttributeSpec("origin", ("imported", "local")),
        AttributeSpec("processing", ("frozen", "fresh")),
        AttributeSpec("harvesting", ("foreign_vessel", "local_vessel")),
        AttributeSpec("certification", ("not_certified", "certified")),
        AttributeSpec("heritage", ("waterfront_development", "fishing_heritage")),
        AttributeSpec("price", ("15", "23", "30", "35"), "continuous",
                      (15.0, 23.0, 30.0, 35.0)),
    ]


def encode(levels, attributes: Sequence[AttributeSpec]) -> np.ndarray:
    """Coded attribute matrix for rows of level indices (n, n_attributes)."""
    levels = np.atleast_2d(np.asarray(levels, dtype=int))
    return np.hstack([a.encode_levels(levels[:, i]) for i, a in enumerate(attributes)])


@dataclass(frozen=True)
class ChoiceCard:
    """A choice card: generated alternatives (level-index tuples) plus the
    implicit status-quo alternative with every attribute at level 0."""
    card_id: int
    block_id: int
    alternatives: tuple

    def __post_init__(self):
        object.__setattr__(self, "alternatives",
                           tuple(tuple(int(v) for v in alt) for alt in self.alternatives))

    def levels(self, baseline=True) -> np.ndarray:
        alts = np.array(self.alternatives, dtype=int)
        if baseline:
            alts = np.vstack([alts, np.zeros((1, alts.shape[1]), dtype=int)])
        return alts


# ---------------------------------------------------------------------------
# model specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Which coefficients enter the utility and how.

    Parameter vector layout used throughout (``param_names``)::

        [asc_<alt>..., fixed..., <attr>*<cov>..., random means..., sd_<random>...]
    """
    random: tuple = ()
    fixed: tuple = ()
    asc: tuple = ("A", "B")
    interactions: tuple = ()
    distribution: str = "normal"
    price: str = "price"

    def __post_init__(self):
        object.__setattr__(self, "random", tuple(self.random))
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "asc", tuple(str(a) for a in self.asc))
        inter = []
        for it in self.interactions:
            if isinstance(it, str):
                it = tuple(s.strip() for s in it.split("*"))
            if len(it) != 2:
                raise ValidationError(f"bad interaction {it!r}")
            inter.append(tuple(it))
        object.__setattr__(self, "interactions", tuple(inter))
        both = set(self.random) & set(self.fixed)
        if both:
            raise ValidationError(f"coefficients both fixed and random: {sorted(both)}")
        if self.distribution != "normal":
            raise ValidationError("only normal mixing is supported")
        names = self.param_names
        if len(set(names)) != len(names):
            raise ValidationError("duplicate coefficient names in model spec")

    @property
    def asc_names(self) -> list[str]:
        return [f"asc_{a}" for a in self.asc]

    @property
    def interaction_names(self) -> list[str]:
        return [f"{a}*{c}" for a, c in self.interactions]

    @property
    def fixed_names(self) -> list[str]:
        return self.asc_names + list(self.fixed) + self.interaction_names

    @property
    def spread_names(self) -> list[str]:
        return [f"sd_{r}" for r in self.random]

    @property
    def param_names(self) -> list[str]:
        return self.fixed_names + list(self.random) + self.spread_names

    @property
    def n_fixed(self) -> int:
        return len(self.fixed_names)

    @property
    def n_random(self) -> int:
        return len(self.random)

    def mnl_names(self) -> list[str]:
        """Coefficient names when every coefficient is treated as fixed."""
        return self.fixed_names + list(self.random)

    def without_random(self) -> "ModelSpec":
        return ModelSpec(random=(), fixed=self.fixed + self.random, asc=self.asc,
                         interactions=self.interactions, price=self.price)

    def pack(self, fixed: Mapping = (), means: Mapping = (), spreads: Mapping = ()) -> np.ndarray:
        """Flat parameter vector from name -> value maps (missing names are 0)."""
        fixed, means, spreads = dict(fixed), dict(means), dict(spreads)
        out = [fixed.get(n, 0.0) for n in self.fixed_names]
        out += [means.get(n, 0.0) for n in self.random]
        out += [spreads.get(n, 0.0) for n in self.random]
        return np.array(out, dtype=float)

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        f, r = self.n_fixed, self.n_random
        return theta[:f], theta[f:f + r], theta[f + r:f + 2 * r]


# ---------------------------------------------------------------------------
# choice data
# ---------------------------------------------------------------------------

def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChoiceDataset:
    """Validated long-format panel of choices, sorted by (respondent, task, alternative)."""
    attributes: tuple
    resp_id: np.ndarray
    task_id: np.ndarray
    alt_id: np.ndarray
    chosen: np.ndarray
    values: np.ndarray
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        attrs = tuple(self.attributes)
        resp = np.asarray(self.resp_id, dtype=np.int64)
        task = np.asarray(self.task_id, dtype=np.int64)
        alt = np.asarray(self.alt_id).astype(str)
        chosen = np.asarray(self.chosen, dtype=np.int8)
        values = np.asarray(self.values, dtype=float).reshape(len(resp), len(attrs))
        order = np.lexsort((alt, task, resp))
        resp, task, alt, chosen, values = (resp[order], task[order], alt[order],
                                           chosen[order], values[order])
        _validate_rows(attrs, resp, task, alt, chosen, values)
        uniq = np.unique(resp)
        covs = {}
        for name, col in dict(self.covariates).items():
            if isinstance(col, Mapping):
                try:
                    col = [col[r] for r in uniq]
                except KeyError as e:
                    raise ValidationError(f"covariate {name!r} missing respondent {e}") from None
            col = np.asarray(col, dtype=float)
            if col.shape != uniq.shape:
                raise ValidationError(f"covariate {name!r} must have one value per respondent")
            covs[name] = _readonly(col)
        for name, v in (("attributes", attrs), ("resp_id", _readonly(resp)),
                        ("task_id", _readonly(task)), ("alt_id", _readonly(alt)),
                        ("chosen", _readonly(chosen)), ("values", _readonly(values)),
                        ("covariates", covs)):
            object.__setattr__(self, name, v)

    # basic shape ---------------------------------------------------------
    @property
    def respondents(self) -> np.ndarray:
        return np.unique(self.resp_id)

    @property
    def n_respondents(self) -> int:
        return len(self.respondents)

    @property
    def n_alternatives(self) -> int:
        return int(np.sum((self.resp_id == self.resp_id[0]) & (self.task_id == self.task_id[0])))

    @property
    def n_tasks(self) -> int:
        """Number of choice situations (respondent x task)."""
        return len(self.resp_id) // self.n_alternatives

    @property
    def attribute_names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def task_respondent_index(self) -> np.ndarray:
        """Index into :attr:`respondents` for every choice situation."""
        J = self.n_alternatives
        return np.searchsorted(self.respondents, self.resp_id[::J])

    def chosen_index(self) -> np.ndarray:
        return np.argmax(self.chosen.reshape(-1, self.n_alternatives), axis=1)

    def column_names(self) -> list[str]:
        """Coded columns available to a model (before ASCs and interactions)."""
        return [c for a in self.attributes for c in a.columns]

    def levels(self) -> np.ndarray:
        return np.column_stack([a.levels_of(self.values[:, i])
                                for i, a in enumerate(self.attributes)])

    def coded_values(self) -> np.ndarray:
        return encode(self.levels(), self.attributes)

    def column(self, name: str) -> np.ndarray:
        """One model column over all rows: asc_<alt>, coded attribute or attr*covariate."""
        if name.startswith("asc_"):
            alt = name[4:]
            if alt not in set(self.alt_id):
                raise ValidationError(f"no alternative {alt!r} for {name}")
            return (self.alt_id == alt).astype(float)
        if "*" in name:
            a, c = (s.strip() for s in name.split("*"))
            if c not in self.covariates:
                raise ValidationError(f"unknown respondent covariate {c!r}")
            ridx = np.searchsorted(self.respondents, self.resp_id)
            return self.column(a) * self.covariates[c][ridx]
        cols = self.column_names()
        if name not in cols:
            raise ValidationError(f"unknown column {name!r}; available: {', '.join(cols)}")
        return self.coded_values()[:, cols.index(name)]

    def design_tensor(self, names: Sequence[str]) -> np.ndarray:
        """Model matrix reshaped to (n_tasks, n_alternatives, len(names))."""
        J = self.n_alternatives
        if not names:
            return np.zeros((self.n_tasks, J, 0))
        coded = self.coded_values()
        cols = self.column_names()
        out = []
        for n in names:
            if n in cols:
                out.append(coded[:, cols.index(n)])
            else:
                out.append(self.column(n))
        return np.column_stack(out).reshape(self.n_tasks, J, len(names))

    def check_spec(self, spec: ModelSpec) -> None:
        for n in spec.param_names[:spec.n_fixed + spec.n_random]:
            self.column(n)
        if spec.price not in spec.fixed_names and spec.price in spec.random:
            raise ValidationError("price coefficient must be fixed")

    def subset(self, respondent_mask) -> "ChoiceDataset":
        """Dataset restricted to respondents where ``respondent_mask`` is true."""
        mask = np.asarray(respondent_mask, dtype=bool)
        keep = set(self.respondents[mask].tolist())
        rows = np.array([r in keep for r in self.resp_id.tolist()], dtype=bool)
        return ChoiceDataset(self.attributes, self.resp_id[rows], self.task_id[rows],
                             self.alt_id[rows], self.chosen[rows], self.values[rows],
                             {k: v[mask] for k, v in self.covariates.items()})

    def with_covariate(self, name: str, values) -> "ChoiceDataset":
        covs = dict(self.covariates)
        covs[name] = values
        return ChoiceDataset(self.attributes, self.resp_id, self.task_id, self.alt_id,
                             self.chosen, self.values, covs)

    def equals(self, other: "ChoiceDataset") -> bool:
        return (self.attributes == other.attributes
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("resp_id", "task_id", "alt_id", "chosen", "values"))
                and self.covariates.keys() == other.covariates.keys()
                and all(np.array_equal(v, other.covariates[k], equal_nan=True)
                        for k, v in self.covariates.items()))


def _validate_rows(attrs, resp, task, alt, chosen, values):
    if len(resp) == 0:
        raise ValidationError("dataset has no rows")
    if np.any((chosen != 0) & (chosen != 1)):
        raise ValidationError("chosen must be 0 or 1")
    key = np.column_stack([resp, task])
    starts = np.flatnonzero(np.r_[True, np.any(key[1:] != key[:-1], axis=1)])
    sizes = np.diff(np.r_[starts, len(resp)])
    for s, n in zip(starts, sizes):
        where = f"(respondent {resp[s]}, task {task[s]})"
        if n != sizes[0]:
            raise ValidationError(f"{where}: {n} alternatives, expected {sizes[0]}")
        if chosen[s:s + n].sum() != 1:
            raise ValidationError(f"{where}: exactly one alternative must be chosen")
        if len(set(alt[s:s + n])) != n:
            raise ValidationError(f"{where}: duplicate alternative ids")
    if sizes[0] < 2:
        raise ValidationError("each task needs at least 2 alternatives")
    for i, a in enumerate(attrs):
        bad = np.flatnonzero(a.levels_of(values[:, i]) < 0)
        if len(bad):
            r = bad[0]
            raise ValidationError(f"(respondent {resp[r]}, task {task[r]}): "
                                  f"{values[r, i]!r} is not a declared {a.name} value")


def load_choice_csv(path, spec: Sequence[AttributeSpec] | None = None) -> ChoiceDataset:
    """Read a long-format choice CSV.

    The header must start with ``resp_id,task_id,alt_id,chosen`` followed by
    the attribute columns in declared order.  Any further columns are
    respondent-level covariates and must be constant within a respondent.
    """
    attrs = tuple(spec) if spec is not None else tuple(default_attributes())
    names = [a.name for a in attrs]
    expected = list(CHOICE_BASE_COLUMNS) + names
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if header[:len(expected)] != expected:
            raise ParseError("header must begin with " + ",".join(expected), 1)
        extra = header[len(expected):]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", lineno)
            try:
                r = [int(rec[0]), int(rec[1]), rec[2].strip(), int(rec[3])]
                r += [float(v) for v in rec[4:4 + len(names)]]
                r += [_parse_optional(v) for v in rec[4 + len(names):]]
            except ValueError as e:
                raise ParseError(str(e), lineno) from None
            rows.append((lineno, r))
    if not rows:
        raise ParseError("no data rows", 2)
    resp = [r[0] for _, r in rows]
    covs = {}
    for j, cname in enumerate(extra):
        per = {}
        for lineno, r in rows:
            v = r[4 + len(names) + j]
            if r[0] in per and not _same(per[r[0]], v):
                raise ParseError(f"covariate {cname!r} varies within respondent {r[0]}", lineno)
            per[r[0]] = v
        covs[cname] = per
    return ChoiceDataset(attrs, resp, [r[1] for _, r in rows], [r[2] for _, r in rows],
                         [r[3] for _, r in rows], [r[4:4 + len(names)] for _, r in rows], covs)


def _parse_optional(v):
    v = v.strip()
    return math.nan if v in MISSING else float(v)


def _same(a, b):
    return a == b or (math.isnan(a) and math.isnan(b))


def write_choice_csv(data: ChoiceDataset, path) -> None:
    cov_names = list(data.covariates)
    ridx = np.searchsorted(data.respondents, data.resp_id)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(CHOICE_BASE_COLUMNS) + data.attribute_names + cov_names)
        for i in range(len(data.resp_id)):
            w.writerow([int(data.resp_id[i]), int(data.task_id[i]), data.alt_id[i],
                        int(data.chosen[i])]
                       + [format_number(v) for v in data.values[i]]
                       + [_fmt_optional(data.covariates[c][ridx[i]]) for c in cov_names])


def _fmt_optional(v):
    return "" if math.isnan(v) else format_number(v)


# ---------------------------------------------------------------------------
# estimation results
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EstimationResult:
    """Fitted model.  ``params`` follows ``param_names``; spreads are reported
    as absolute values and the covariance is expressed in that parameterization."""
    model: str
    param_names: list
    kinds: list
    params: np.ndarray
    std_errors: np.ndarray
    covariance: np.ndarray | None
    log_likelihood: float
    n_observations: int
    n_respondents: int
    converged: bool = True
    iterations: int = 0
    free: np.ndarray | None = None
    se_reliable: bool = True
    message: str = ""
    spec: ModelSpec | None = None
    hessian: np.ndarray | None = None

    def __post_init__(self):
        self.param_names = list(self.param_names)
        self.kinds = list(self.kinds)
        self.params = np.asarray(self.params, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        if self.covariance is not None:
            self.covariance = np.asarray(self.covariance, dtype=float)
        if self.free is None:
            self.free = np.ones(len(self.params), dtype=bool)
        self.free = np.asarray(self.free, dtype=bool)

    @property
    def n_params(self) -> int:
        return int(self.free.sum())

    @property
    def aic(self) -> float:
        return 2 * self.n_params - 2 * self.log_likelihood

    @property
    def bic(self) -> float:
        return self.n_params * math.log(self.n_observations) - 2 * self.log_likelihood

    @property
    def estimates(self) -> dict:
        """Fixed coefficients and random-coefficient means: name -> (value, se)."""
        return {n: (float(v), float(s)) for n, k, v, s in
                zip(self.param_names, self.kinds, self.params, self.std_errors) if k != "sd"}

    @property
    def random_spreads(self) -> dict:
        return {n[3:]: (float(v), float(s)) for n, k, v, s in
                zip(self.param_names, self.kinds, self.params, self.std_errors) if k == "sd"}

    def index(self, name: str) -> int:
        return self.param_names.index(name)

    def value(self, name: str) -> float:
        return float(self.params[self.index(name)])


RESULT_COLUMNS = ("parameter", "kind", "value", "std_error", "free")


def _meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta")


def write_result_csv(result: EstimationResult, path) -> None:
    """Coefficient table (one row per parameter, covariance columns appended)
    plus a ``<stem>.meta`` key=value sidecar with fit diagnostics."""
    if not np.all(np.isfinite(result.params)) or not math.isfinite(result.log_likelihood):
        raise ValidationError("cannot write a non-finite result")
    names = result.param_names
    cov = result.covariance
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(RESULT_COLUMNS) + ([f"cov:{n}" for n in names] if cov is not None else []))
        for i, n in enumerate(names):
            row = [n, result.kinds[i], format_number(result.params[i]),
                   format_number(result.std_errors[i]), int(result.free[i])]
            if cov is not None:
                row += [format_number(v) for v in cov[i]]
            w.writerow(row)
    meta = {
        "model": result.model,
        "log_likelihood": format_number(result.log_likelihood),
        "aic": format_number(result.aic),
        "bic": format_number(result.bic),
        "n_observations": result.n_observations,
        "n_respondents": result.n_respondents,
        "converged": int(result.converged),
        "iterations": result.iterations,
        "se_reliable": int(result.se_reliable),
        "message": result.message.replace("\n", " "),
    }
    if result.spec is not None:
        s = result.spec
        meta.update(asc=",".join(s.asc), fixed=",".join(s.fixed), random=",".join(s.random),
                    interactions=",".join(s.interaction_names), price=s.price)
    with open(_meta_path(path), "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k} = {v}\n")


def read_result_csv(path) -> EstimationResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[:5]) != RESULT_COLUMNS:
            raise ParseError("not a result file", 1)
        has_cov = len(header) > 5
        rows = list(reader)
    names = [r[0] for r in rows]
    cov = np.array([[float(v) for v in r[5:]] for r in rows]) if has_cov else None
    meta = read_flat_config(_meta_path(path))
    spec = None
    if "random" in meta:
        spec = ModelSpec(random=_csv_list(meta["random"]), fixed=_csv_list(meta["fixed"]),
                         asc=_csv_list(meta["asc"]), interactions=_csv_list(meta["interactions"]),
                         price=meta.get("price", "price"))
    return EstimationResult(
        model=meta["model"], param_names=names, kinds=[r[1] for r in rows],
        params=[float(r[2]) for r in rows], std_errors=[float(r[3]) for r in rows],
        covariance=cov, log_likelihood=float(meta["log_likelihood"]),
        n_observations=int(meta["n_observations"]), n_respondents=int(meta["n_respondents"]),
        converged=bool(int(meta["converged"])), iterations=int(meta["iterations"]),
        free=[bool(int(r[4])) for r in rows], se_reliable=bool(int(meta["se_reliable"])),
        message=meta.get("message", ""), spec=spec)


# ---------------------------------------------------------------------------
# flat key=value files
# ---------------------------------------------------------------------------

def read_flat_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key = value, got {line!r}", lineno)
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _csv_list(v: str) -> tuple:
    return tuple(s.strip() for s in v.split(",") if s.strip())


def read_model_spec(path) -> tuple[ModelSpec, dict]:
    """Model spec file -> (ModelSpec, remaining settings such as draws/seed)."""
    cfg = read_flat_config(path)
    known = {"random", "fixed", "interactions", "asc", "price", "distribution"}
    spec = ModelSpec(random=_csv_list(cfg.get("random", "")),
                     fixed=_csv_list(cfg.get("fixed", "")),
                     asc=_csv_list(cfg.get("asc", "A,B")),
                     interactions=_csv_list(cfg.get("interactions", "")),
                     distribution=cfg.get("distribution", "normal"),
                     price=cfg.get("price", "price"))
    return spec, {k: v for k, v in cfg.items() if k not in known}


def read_attributes(path) -> list[AttributeSpec]:
    """Attribute grammar file: ``name = level1,level2,...`` per attribute and an
    optional ``continuous = name1,name2`` line naming numeric attributes."""
    cfg = read_flat_config(path)
    cont = set(_csv_list(cfg.pop("continuous", "")))
    attrs = []
    for name, levels in cfg.items():
        labs = _csv_list(levels)
        if name in cont:
            try:
                vals = tuple(float(v) for v in labs)
            except ValueError:
                raise ValidationError(f"continuous attribute {name!r} needs numeric levels") from None
            attrs.append(AttributeSpec(name, labs, "continuous", vals))
        else:
            attrs.append(AttributeSpec(name, labs))
    missing = cont - {a.name for a in attrs}
    if missing:
        raise ValidationError(f"continuous names not declared: {sorted(missing)}")
    return attrs


# ---------------------------------------------------------------------------
# attitude data
# ---------------------------------------------------------------------------

# item -> factor number; item 1 is the general statement outside the factors
ITEM_FACTORS = {1: 0, 2: 1, 3: 1, 4: 1, 5: 2, 6: 2, 7: 2, 8: 2,
                9: 3, 10: 3, 11: 4, 12: 5, 13: 5, 14: 5, 15: 5, 16: 5}


@dataclass(frozen=True, eq=False)
class AttitudeDataset:
    """Likert answers (1-5, NaN when missing) with respondent covariates."""
    resp_id: np.ndarray
    scores: np.ndarray
    covariates: dict
    town: np.ndarray
    item_factors: dict = field(default_factory=lambda: dict(ITEM_FACTORS))

    def __post_init__(self):
        resp = np.asarray(self.resp_id, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape[0] != len(resp):
            raise ValidationError("scores must be (n_respondents, n_items)")
        if len(np.unique(resp)) != len(resp):
            raise ValidationError("duplicate respondent ids")
        ok = np.isnan(scores) | ((scores >= 1) & (scores <= 5) & (scores == np.round(scores)))
        if not ok.all():
            r, c = np.argwhere(~ok)[0]
            raise ValidationError(f"respondent {resp[r]}: q{c + 1} = {scores[r, c]} outside 1..5")
        covs = {k: _readonly(np.asarray(v, dtype=float)) for k, v in self.covariates.items()}
        for k, v in covs.items():
            if v.shape != resp.shape:
                raise ValidationError(f"covariate {k!r} has wrong length")
        object.__setattr__(self, "resp_id", _readonly(resp))
        object.__setattr__(self, "scores", _readonly(scores))
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "town", _readonly(np.asarray(self.town).astype(str)))

    @property
    def n(self) -> int:
        return len(self.resp_id)

    def grouping(self, name: str) -> np.ndarray:
        if name == "town":
            return self.town
        if name not in self.covariates:
            raise ValidationError(f"unknown grouping {name!r}")
        return self.covariates[name]

    def complete_rows(self, covariates: Iterable[str] = (), items=True) -> np.ndarray:
        """Boolean mask of respondents with no missing value in the named fields."""
        mask = np.ones(self.n, dtype=bool)
        if items:
            mask &= ~np.isnan(self.scores).any(axis=1)
        for c in covariates:
            if c != "town":
                mask &= ~np.isnan(self.grouping(c))
        return mask


def load_attitude_csv(path) -> AttitudeDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if tuple(header) != ATTITUDE_COLUMNS:
            raise ParseError("header must be " + ",".join(ATTITUDE_COLUMNS), 1)
        resp, scores, covs, town = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", lineno)
            try:
                resp.append(int(rec[0]))
                scores.append([_parse_optional(v) for v in rec[1:1 + N_ITEMS]])
                covs.append([_parse_optional(v) for v in rec[1 + N_ITEMS:-1]])
            except ValueError as e:
                raise ParseError(str(e), lineno) from None
            town.append(rec[-1].strip())
    if not resp:
        raise ParseError("no data rows", 2)
    covs = np.array(covs, dtype=float)
    return AttitudeDataset(resp, np.array(scores), {c: covs[:, i] for i, c in
                                                    enumerate(ATTITUDE_COVARIATES)}, town)


def write_attitude_csv(data: AttitudeDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ATTITUDE_COLUMNS)
        for i in range(data.n):
            w.writerow([int(data.resp_id[i])]
                       + [_fmt_optional(v) for v in data.scores[i]]
                       + [_fmt_optional(data.covariates.get(c, np.full(data.n, np.nan))[i])
                          for c in ATTITUDE_COVARIATES]
                       + [data.town[i]])
