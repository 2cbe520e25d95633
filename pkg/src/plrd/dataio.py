"""Dataset ingestion, result records, simulation configs and atomic file output."""

import csv
from dataclasses import asdict, dataclass, fields
import io
import json
import math
import os
import tempfile

import numpy as np

from .errors import ConfigError, DataFormatError
from .simulation import DGPS, DgpSpec, SimStudy, solve_n_for_mbar
from .smoothing import RdDataset


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory and a rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_columns(path, columns):
    """Read the named numeric columns of a comma-separated file with a header row.

    Row numbers in errors count the header as row 1.
    """
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc.strerror}", path=str(path)) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path} is empty", path=str(path)) from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataFormatError(f"missing column(s) {missing}; header has {header}",
                                  missing=missing, header=header)
        idx = [header.index(c) for c in columns]
        out = [[] for _ in columns]
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            for k, (col, j) in enumerate(zip(columns, idx)):
                cell = row[j].strip() if j < len(row) else ""
                try:
                    value = float(cell)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise DataFormatError(
                        f"row {row_no}, column {col!r}: {cell!r} is not a finite number",
                        row=row_no, column=col, value=cell)
                out[k].append(value)
    return [np.array(v) for v in out]


def load_dataset(path, x_col, y_col, cutoff):
    x, y = read_columns(path, [x_col, y_col])
    return RdDataset(x, y, cutoff)


def dataset_csv(data):
    lines = ["x,y,d"]
    lines += [f"{x!r},{y!r},{int(d)}" for x, y, d in zip(data.x.tolist(), data.y.tolist(),
                                                          data.d.tolist())]
    return "\n".join(lines) + "\n"


@dataclass
class ResultRecord:
    """Flat summary of one estimation run.

    ``tau_hat`` is always the jump ``mu(c+) - mu(c-)``; ``treatment_effect``
    flips its sign when treatment is assigned below the cutoff.
    """

    tau_hat: float
    treatment_effect: float
    treated: str
    se: float
    ci_lower: float
    ci_upper: float
    alpha: float
    h_requested: float
    h_used: float
    h_min: float
    floor_binding: bool
    n: int
    n_within_h: int
    degree: int
    kernel: str
    rule: str
    variance_method: str
    timing_seconds: float
    diagnostics: dict = None

    @classmethod
    def from_result(cls, result, data, treated, alpha, variance, timing):
        sign = 1.0 if treated == "above" else -1.0
        lo, hi = result.ci.lower, result.ci.upper
        if sign < 0:
            lo, hi = -hi, -lo
        return cls(
            tau_hat=result.tau_hat,
            treatment_effect=sign * result.tau_hat,
            treated=treated,
            se=result.se,
            ci_lower=lo,
            ci_upper=hi,
            alpha=alpha,
            h_requested=float(result.h_requested),
            h_used=float(result.h_used),
            h_min=float(result.floor.h_min),
            floor_binding=bool(result.floor.binding),
            n=data.n,
            n_within_h=int(np.count_nonzero(np.abs(data.x - data.cutoff) <= result.h_used)),
            degree=result.fit.degree,
            kernel=result.fit.kernel,
            rule=result.rule,
            variance_method=variance,
            timing_seconds=timing,
            diagnostics=None if result.diagnostics is None else result.diagnostics.as_dict(),
        )

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def to_csv(self):
        names = [f.name for f in fields(self)]
        values = []
        for name in names:
            v = getattr(self, name)
            if v is None:
                values.append("")
            elif isinstance(v, bool):
                values.append("true" if v else "false")
            elif isinstance(v, float):
                values.append(repr(v))
            elif isinstance(v, dict):
                values.append(json.dumps(v))
            else:
                values.append(str(v))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        writer.writerow(values)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(text.splitlines()))
        if len(rows) != 2:
            raise DataFormatError("result CSV must have a header and exactly one row")
        raw = dict(zip(rows[0], rows[1]))
        kwargs = {}
        for f in fields(cls):
            cell = raw[f.name]
            if f.type is bool:
                kwargs[f.name] = cell == "true"
            elif f.type is float:
                kwargs[f.name] = float(cell)
            elif f.type is int:
                kwargs[f.name] = int(cell)
            elif f.type is dict:
                kwargs[f.name] = json.loads(cell) if cell else None
            else:
                kwargs[f.name] = cell
        return cls(**kwargs)


# key -> accepted types
CONFIG_KEYS = {
    "dgp": (int,),
    "beta_a": (int, float),
    "beta_b": (int, float),
    "n": (int,),
    "m_bar": (int, float),
    "methods": (list,),
    "replications": (int,),
    "seed": (int,),
    "alpha": (int, float),
    "output_dir": (str,),
    "workers": (int,),
}
REQUIRED_KEYS = ("dgp", "methods", "replications", "seed", "output_dir")


@dataclass(frozen=True)
class SimConfig:
    study: SimStudy
    output_dir: str
    workers: int
    raw: dict


def parse_sim_config(raw):
    """Validate a flat simulation config and build the study it describes."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {unknown}", keys=unknown)
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing config key(s): {missing}", keys=missing)
    bad = [k for k, v in raw.items()
           if isinstance(v, bool) or not isinstance(v, CONFIG_KEYS[k])]
    if bad:
        raise ConfigError(f"config key(s) with the wrong type: {sorted(bad)}", keys=sorted(bad))
    if ("n" in raw) == ("m_bar" in raw):
        raise ConfigError("give exactly one of 'n' and 'm_bar'", keys=["n", "m_bar"])
    if ("beta_a" in raw) != ("beta_b" in raw):
        raise ConfigError("'beta_a' and 'beta_b' must be given together", keys=["beta_a", "beta_b"])
    if raw["dgp"] not in DGPS:
        raise ConfigError(f"dgp must be one of {sorted(DGPS)}", keys=["dgp"])
    dgp = DGPS[raw["dgp"]]
    if "beta_a" in raw:
        if not (raw["beta_a"] > 0 and raw["beta_b"] > 0):
            raise ConfigError("beta parameters must be positive", keys=["beta_a", "beta_b"])
        dgp = DgpSpec(0, float(raw["beta_a"]), float(raw["beta_b"]), mean_id=dgp.id)
    if "n" in raw:
        n = raw["n"]
        if n < 2:
            raise ConfigError("n must be at least 2", keys=["n"])
    else:
        if not raw["m_bar"] > 0:
            raise ConfigError("m_bar must be positive", keys=["m_bar"])
        n = solve_n_for_mbar(dgp, raw["m_bar"])
    alpha = float(raw.get("alpha", 0.05))
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)", keys=["alpha"])
    workers = raw.get("workers", 1)
    if workers < 1:
        raise ConfigError("workers must be at least 1", keys=["workers"])
    if not all(isinstance(m, str) for m in raw["methods"]):
        raise ConfigError("methods must be a list of strings", keys=["methods"])
    study = SimStudy(dgp, n, tuple(raw["methods"]), raw["replications"], alpha, raw["seed"])
    return SimConfig(study, raw["output_dir"], workers, dict(raw))


def load_sim_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open {path}: {exc.strerror}", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})",
                          line=exc.lineno) from None
    return parse_sim_config(raw)
