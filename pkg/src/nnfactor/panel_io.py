"""Panel ingestion, covariate design construction, estimate archives.

Input is a long-format UTF-8 CSV with a header row: one row per
(asset, period) pair, empty fields meaning missing. Absent pairs become
masked cells. Designs are assembled in a fixed documented order --
intercept, then the declared characteristic columns (optionally
rank-transformed), then two linear B-spline columns per spline
characteristic -- so a design is reproducible from its spec alone.

Estimate archives are directories of full-precision CSV matrices plus a
key=value metadata file; round-trips are decimal-exact.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, FormatError, InvalidInput
from .extract import FactorEstimate
from .problems import FamilyKind, ModelFamily, Panel

FORMAT_VERSION = "1"
_FLOAT_FMT = "%.17e"


@dataclass(frozen=True)
class PanelSchema:
    asset_col: str = "asset_id"
    period_col: str = "period"
    return_col: str = "return"
    # None = every remaining column is a characteristic.
    characteristic_cols: tuple | None = None


@dataclass(frozen=True)
class RawTable:
    """Column-wise panel table keyed by (asset, period)."""

    assets: tuple
    periods: tuple
    returns: np.ndarray  # (N, T), nan = missing
    characteristics: dict  # name -> (N, T) array, nan = missing


@dataclass(frozen=True)
class DesignSpec:
    intercept: bool = True
    raw_columns: tuple = ()
    rank_transform: bool = False
    spline_columns: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "raw_columns", tuple(self.raw_columns))
        object.__setattr__(self, "spline_columns", tuple(self.spline_columns))
        if self.n_covariates < 1:
            raise ConfigError("design produces an empty covariate vector")

    @property
    def n_covariates(self) -> int:
        return int(self.intercept) + len(self.raw_columns) + 2 * len(self.spline_columns)

    def column_names(self) -> list:
        names = ["intercept"] if self.intercept else []
        names += list(self.raw_columns)
        for col in self.spline_columns:
            names += [f"{col}:spline_mid", f"{col}:spline_hi"]
        return names


def _sort_key(value: str):
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def load_panel(path, schema: PanelSchema = PanelSchema()) -> RawTable:
    """Read a long CSV into a dense (asset x period) table."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = list(reader)
    for col in (schema.asset_col, schema.period_col, schema.return_col):
        if col not in header:
            raise FormatError(f"{path}: missing required column {col!r}")
    col_idx = {name: j for j, name in enumerate(header)}
    if len(col_idx) != len(header):
        raise FormatError(f"{path}: duplicate column names in header")
    if schema.characteristic_cols is None:
        chars = [c for c in header if c not in
                 (schema.asset_col, schema.period_col, schema.return_col)]
    else:
        chars = list(schema.characteristic_cols)
        for c in chars:
            if c not in col_idx:
                raise FormatError(f"{path}: schema names unknown column {c!r}")

    seen = set()
    records = []
    for rownum, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}:{rownum}: expected {len(header)} fields, "
                              f"got {len(row)}")
        asset = row[col_idx[schema.asset_col]].strip()
        period = row[col_idx[schema.period_col]].strip()
        if not asset or not period:
            raise FormatError(f"{path}:{rownum}: empty asset or period key")
        key = (asset, period)
        if key in seen:
            raise FormatError(f"{path}:{rownum}: duplicate (asset, period) "
                              f"key {key}")
        seen.add(key)
        records.append((rownum, asset, period, row))

    assets = tuple(sorted({r[1] for r in records}, key=_sort_key))
    periods = tuple(sorted({r[2] for r in records}, key=_sort_key))
    a_idx = {a: i for i, a in enumerate(assets)}
    p_idx = {p: j for j, p in enumerate(periods)}
    n, t = len(assets), len(periods)
    if n == 0 or t == 0:
        raise FormatError(f"{path}: no data rows")

    returns = np.full((n, t), np.nan)
    char_arrays = {c: np.full((n, t), np.nan) for c in chars}

    def parse(rownum, colname, text):
        text = text.strip()
        if text == "":
            return np.nan
        try:
            return float(text)
        except ValueError:
            raise FormatError(f"{path}:{rownum}: column {colname!r}: "
                              f"cannot parse {text!r} as a number") from None

    for rownum, asset, period, row in records:
        i, j = a_idx[asset], p_idx[period]
        returns[i, j] = parse(rownum, schema.return_col, row[col_idx[schema.return_col]])
        for cname in chars:
            char_arrays[cname][i, j] = parse(rownum, cname, row[col_idx[cname]])

    return RawTable(assets=assets, periods=periods, returns=returns,
                    characteristics=char_arrays)


def rank_transform(values) -> np.ndarray:
    """Map one period's observed values to average-rank scores in [-0.5, 0.5].

    A value with ascending average rank r among n observed maps to
    ``(r - 1)/(n - 1) - 0.5``; a single observation maps to 0; missing
    (nan) entries stay missing.
    """
    v = np.asarray(values, dtype=float)
    out = np.full(v.shape, np.nan)
    obs = ~np.isnan(v)
    n = int(obs.sum())
    if n == 0:
        return out
    if n == 1:
        out[obs] = 0.0
        return out
    ranks = rankdata(v[obs], method="average")
    out[obs] = (ranks - 1.0) / (n - 1.0) - 0.5
    return out


def _spline_basis(z: np.ndarray):
    """Linear B-spline pair beyond the intercept span, internal knot at 0.

    On knots (-0.5, 0, 0.5) the full hat basis has three functions summing
    to one; the redundant left hat is dropped against the intercept. Returns
    (mid hat peaked at 0, right ramp peaked at +0.5).
    """
    mid = np.clip(1.0 - np.abs(z) / 0.5, 0.0, None)
    hi = np.clip(z / 0.5, 0.0, None)
    return mid, hi


def build_design(table: RawTable, spec: DesignSpec) -> Panel:
    """Assemble the covariate panel declared by ``spec``.

    Cells missing the return or any required characteristic are masked.
    Spline characteristics are always rank-transformed first (the knot sits
    at the cross-sectional median of the rank scale).
    """
    for col in tuple(spec.raw_columns) + tuple(spec.spline_columns):
        if col not in table.characteristics:
            raise ConfigError(f"design references unknown column {col!r}")
    n, t = table.returns.shape
    p = spec.n_covariates
    x = np.zeros((n, t, p))
    needed = np.ones((n, t), dtype=bool)

    j = 0
    if spec.intercept:
        x[:, :, j] = 1.0
        j += 1
    for col in spec.raw_columns:
        vals = table.characteristics[col]
        if spec.rank_transform:
            vals = np.column_stack([rank_transform(vals[:, tt]) for tt in range(t)])
        x[:, :, j] = vals
        needed &= ~np.isnan(vals)
        j += 1
    for col in spec.spline_columns:
        z = np.column_stack([rank_transform(table.characteristics[col][:, tt])
                             for tt in range(t)])
        mid, hi = _spline_basis(z)
        x[:, :, j] = mid
        x[:, :, j + 1] = hi
        needed &= ~np.isnan(z)
        j += 2

    mask = needed & ~np.isnan(table.returns)
    y = np.where(mask, table.returns, 0.0)
    x = np.where(mask[:, :, None], x, 0.0)
    return Panel(y=y, mask=mask, x=x,
                 asset_ids=table.assets, period_ids=table.periods)


# --- estimate archives ----------------------------------------------------

_MATRIX_FIELDS = ("a_hat", "b_hat", "f_hat", "mu_hat", "phi_hat",
                  "lambda_hat", "phi_mat_hat")


def _write_matrix(path, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([_FLOAT_FMT % v for v in row])


def _read_matrix(path, shape):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        data = list(csv.reader(fh))
    rows, cols = np.atleast_2d(np.empty(shape)).shape
    if len(data) != rows or any(len(r) != cols for r in data):
        raise FormatError(f"{path}: truncated or ragged matrix payload")
    try:
        flat = np.array([[float(v) for v in row] for row in data], dtype=float)
    except ValueError:
        raise FormatError(f"{path}: non-numeric matrix payload") from None
    return flat.reshape(shape)


def save_estimate(estimate: FactorEstimate, path, lambda_used=None,
                  solver_report=None):
    """Write a factor estimate archive (directory of CSVs + metadata)."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "family": estimate.family.kind.value,
        "zero_alpha": str(estimate.family.zero_alpha),
        "n_assets": str(estimate.n_assets),
        "k_hat": str(estimate.k_hat),
        "delta_used": _FLOAT_FMT % estimate.delta_used,
    }
    if lambda_used is not None:
        meta["lambda_used"] = _FLOAT_FMT % lambda_used
    if solver_report is not None:
        meta["solver_iterations"] = str(solver_report.iterations)
        meta["solver_converged"] = str(solver_report.converged)
        meta["solver_subgradient_ratio"] = _FLOAT_FMT % solver_report.final_subgradient_ratio
    fields = []
    for name in _MATRIX_FIELDS:
        arr = getattr(estimate, name)
        if arr is not None:
            arr = np.asarray(arr, dtype=float)
            fields.append(name)
            meta[f"shape_{name}"] = "x".join(str(d) for d in arr.shape)
            if arr.size:
                _write_matrix(os.path.join(path, f"{name}.csv"), arr)
    meta["fields"] = ",".join(fields)
    with open(os.path.join(path, "metadata.txt"), "w", encoding="utf-8") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={meta[k]}\n")


def load_metadata(path) -> dict:
    meta_path = os.path.join(path, "metadata.txt")
    if not os.path.exists(meta_path):
        raise FormatError(f"{path}: not an estimate archive (no metadata.txt)")
    meta = {}
    with open(meta_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: malformed metadata line {line!r}")
            k, v = line.split("=", 1)
            meta[k] = v
    return meta


def load_estimate(path) -> FactorEstimate:
    """Read an archive back; decimal-exact inverse of :func:`save_estimate`."""
    meta = load_metadata(path)
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: format version {meta.get('format_version')!r} "
                          f"!= supported {FORMAT_VERSION!r}")
    try:
        family = ModelFamily(FamilyKind(meta["family"]),
                             zero_alpha=meta["zero_alpha"] == "True")
        n_assets = int(meta["n_assets"])
        k_hat = int(meta["k_hat"])
        delta_used = float(meta["delta_used"])
        fields = [f for f in meta["fields"].split(",") if f]
        shapes = {f: tuple(int(d) for d in meta[f"shape_{f}"].split("x"))
                  for f in fields}
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete metadata ({exc})") from None
    arrays = {}
    for name in fields:
        shape = shapes[name]
        if int(np.prod(shape)) == 0:
            arrays[name] = np.zeros(shape)
            continue
        fpath = os.path.join(path, f"{name}.csv")
        if not os.path.exists(fpath):
            raise FormatError(f"{path}: missing matrix file {name}.csv")
        arrays[name] = _read_matrix(fpath, shape)
    f_hat = arrays.pop("f_hat")
    return FactorEstimate(family=family, n_assets=n_assets, k_hat=k_hat,
                          delta_used=delta_used, f_hat=f_hat, **arrays)
