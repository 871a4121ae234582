"""Data ingestion, black-box prediction adapters, artifact persistence,
run configuration, and the command-line surface.

Artifact formats are self-describing: binary containers start with one
JSON header line followed by little-endian float64 blocks; summaries,
patterns, and explanations are plain JSON. Nothing written here embeds
timestamps or environment state, so equal seeds give byte-identical
files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import shlex
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import explain as explain_mod
from .errors import (
    AdapterError,
    ConfigError,
    EnetmixError,
    IngestionError,
    NumericalCollapseError,
    PersistenceError,
)
from .explain import Explanation, Pattern, SurrogateModel, fit_surrogate
from .model import (
    LOGIT_TRANSFORMED,
    PROBABILITY,
    RAW_SCORE,
    ChainState,
    Dataset,
    Hyperparameters,
    PosteriorChain,
    Standardization,
    logit_transform,
)
from .rngdist import RandomSource

CHAIN_FORMAT = "enetmix.chain"
MODEL_FORMAT = "enetmix.model"
PATTERNS_FORMAT = "enetmix.patterns"
EXPLANATIONS_FORMAT = "enetmix.explanations"
FORMAT_VERSION = 1

_FLOAT_FMT = "%.17g"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_COLLAPSE = 2


# ------------------------------------------------------------------ #
# CSV ingestion
# ------------------------------------------------------------------ #

def read_csv_matrix(path, has_header: bool = False):
    """Parse a numeric CSV file into (header, matrix).

    Rows must be rectangular and every cell numeric; violations raise
    :class:`IngestionError` citing the 1-based line number.
    """
    path = Path(path)
    header: Optional[list[str]] = None
    rows: list[list[float]] = []
    width: Optional[int] = None
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise IngestionError(f"{path}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and has_header:
                header = [cell.strip() for cell in row]
                width = len(header)
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestionError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                col = next(
                    i for i, cell in enumerate(row) if not _is_number(cell)
                )
                raise IngestionError(
                    f"{path}: line {lineno}, column {col + 1}:"
                    f" non-numeric value {row[col]!r}"
                ) from None
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=np.float64)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _write_csv_matrix(path, matrix) -> None:
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt=_FLOAT_FMT)


def load_dataset(features_path, *, features_header: bool = False,
                 responses_path=None, responses_header: bool = False,
                 adapter: Optional[str] = None,
                 response_kind: str = RAW_SCORE,
                 classes: Optional[Sequence[str]] = None) -> list[Dataset]:
    """Build one Dataset per target class.

    Features come from a CSV file; responses either from a CSV whose
    columns hold per-class scores (header names the classes) or from the
    subprocess adapter. Row counts must agree. Probability responses are
    flagged for the logit transform, which happens at fit time.
    """
    feat_header, X = read_csv_matrix(features_path, has_header=features_header)

    if (responses_path is None) == (adapter is None):
        raise IngestionError(
            "exactly one of responses_path or adapter must be provided"
        )
    if responses_path is not None:
        resp_header, Y = read_csv_matrix(responses_path, has_header=responses_header)
        if Y.shape[0] != X.shape[0]:
            raise IngestionError(
                f"{responses_path}: {Y.shape[0]} response rows for"
                f" {X.shape[0]} feature rows"
            )
    else:
        resp_header = None
        Y = subprocess_adapter(adapter, X)

    class_names = (
        [str(c) for c in resp_header]
        if resp_header is not None
        else [str(i) for i in range(Y.shape[1])]
    )
    wanted = class_names if classes is None else [str(c) for c in classes]
    feature_names = tuple(feat_header) if feat_header is not None else None

    datasets = []
    for class_id in wanted:
        if class_id not in class_names:
            raise IngestionError(
                f"class {class_id!r} not among response columns {class_names}"
            )
        col = class_names.index(class_id)
        datasets.append(
            Dataset(
                X=X, y=Y[:, col], class_id=class_id,
                response_kind=response_kind, feature_names=feature_names,
            )
        )
    return datasets


# ------------------------------------------------------------------ #
# Black-box subprocess adapter
# ------------------------------------------------------------------ #

def subprocess_adapter(command: str, X) -> np.ndarray:
    """Query a black-box model through a child process.

    Protocol: the child reads CSV feature rows on stdin and writes one
    CSV row of per-class scores per input row on stdout, in order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    args = shlex.split(command or "")
    if not args:
        raise AdapterError("adapter command is empty")
    buf = io.StringIO()
    np.savetxt(buf, X, delimiter=",", fmt=_FLOAT_FMT)
    try:
        proc = subprocess.run(
            args, input=buf.getvalue(), capture_output=True, text=True,
        )
    except OSError as err:
        raise AdapterError(f"failed to launch adapter {args[0]!r}: {err}") from err
    if proc.returncode != 0:
        raise AdapterError(
            f"adapter exited with status {proc.returncode}:"
            f" {proc.stderr.strip() or '<no stderr>'}"
        )
    rows = []
    for lineno, line in enumerate(proc.stdout.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError:
            raise AdapterError(
                f"adapter output line {lineno} is not numeric CSV: {line!r}"
            ) from None
    if len(rows) != X.shape[0]:
        raise AdapterError(
            f"adapter returned {len(rows)} rows for {X.shape[0]} inputs"
        )
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise AdapterError(f"adapter output is ragged (row widths {sorted(widths)})")
    return np.asarray(rows, dtype=np.float64)


# ------------------------------------------------------------------ #
# Persistence: chain and model containers
# ------------------------------------------------------------------ #

def _draw_fields(J: int, K: int, p: int, n: int):
    return (
        ("u", (J - 1,)),
        ("pi", (J,)),
        ("alpha", ()),
        ("beta", (J, p)),
        ("sigma2", (J,)),
        ("tau", (J, p)),
        ("z", (n,)),
        ("c", (J,)),
        ("w", (K,)),
        ("lambda1", (K,)),
        ("lambda2", (K,)),
    )


def _draw_floats(J: int, K: int, p: int, n: int) -> int:
    return sum(int(np.prod(shape, dtype=np.int64)) for _, shape in _draw_fields(J, K, p, n))


def chain_to_bytes(chain: PosteriorChain) -> bytes:
    """Serialize a chain: one JSON header line plus float64 blocks."""
    if chain.draws:
        J, K, p, n = (
            chain.draws[0].J, chain.draws[0].K, chain.draws[0].p, chain.draws[0].n,
        )
    else:
        J, K, p, n = chain.hyper.J, chain.hyper.K, 0, 0
    header = {
        "format": CHAIN_FORMAT,
        "version": FORMAT_VERSION,
        "class_id": chain.class_id,
        "seed": chain.seed,
        "relabeled": chain.relabeled,
        "n_chains": chain.n_chains,
        "n_draws": len(chain.draws),
        "dims": {"J": J, "K": K, "p": p, "n": n},
        "hyper": asdict(chain.hyper),
        "has_logliks": bool(chain.logliks),
    }
    blob = bytearray(json.dumps(header).encode("utf-8"))
    blob += b"\n"
    for draw in chain.draws:
        for name, shape in _draw_fields(J, K, p, n):
            value = np.asarray(getattr(draw, name), dtype=np.float64).reshape(shape)
            blob += value.astype("<f8").tobytes()
    if chain.logliks:
        blob += np.asarray(chain.logliks, dtype="<f8").tobytes()
    return bytes(blob)


def chain_from_bytes(blob: bytes) -> PosteriorChain:
    """Inverse of :func:`chain_to_bytes`; values round-trip bit-exactly."""
    header, payload = _split_header(blob, CHAIN_FORMAT)
    dims = header["dims"]
    J, K, p, n = dims["J"], dims["K"], dims["p"], dims["n"]
    n_draws = header["n_draws"]
    expected = n_draws * _draw_floats(J, K, p, n) + (n_draws if header["has_logliks"] else 0)
    if len(payload) != expected * 8:
        raise PersistenceError(
            f"payload holds {len(payload)} bytes, header implies {expected * 8}"
        )
    try:
        hyper = Hyperparameters(**header["hyper"])
    except (TypeError, EnetmixError) as err:
        raise PersistenceError(f"invalid hyperparameters in header: {err}") from err

    draws = []
    offset = 0
    flat = np.frombuffer(payload, dtype="<f8")
    for _ in range(n_draws):
        values = {}
        for name, shape in _draw_fields(J, K, p, n):
            count = int(np.prod(shape, dtype=np.int64))
            arr = flat[offset:offset + count].reshape(shape).astype(np.float64)
            offset += count
            values[name] = arr
        draws.append(
            ChainState(
                u=values["u"], pi=values["pi"], alpha=float(values["alpha"]),
                beta=values["beta"], sigma2=values["sigma2"], tau=values["tau"],
                z=values["z"].astype(np.int64), c=values["c"].astype(np.int64),
                w=values["w"], lambda1=values["lambda1"], lambda2=values["lambda2"],
            )
        )
    logliks = ()
    if header["has_logliks"]:
        logliks = tuple(float(v) for v in flat[offset:offset + n_draws])
    return PosteriorChain(
        draws=tuple(draws), hyper=hyper, seed=header["seed"],
        class_id=header["class_id"], relabeled=header["relabeled"],
        logliks=logliks, n_chains=header["n_chains"],
    )


def _split_header(blob: bytes, expected_format: str):
    newline = blob.find(b"\n")
    if newline < 0:
        raise PersistenceError("file is truncated: no header line found")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise PersistenceError(f"unreadable header: {err}") from err
    if not isinstance(header, dict) or header.get("format") != expected_format:
        raise PersistenceError(
            f"expected a {expected_format} artifact, got {header.get('format')!r}"
        )
    if header.get("version") != FORMAT_VERSION:
        raise PersistenceError(
            f"unsupported schema version {header.get('version')!r}"
        )
    return header, blob[newline + 1:]


def persist_chain(chain: PosteriorChain, path) -> None:
    Path(path).write_bytes(chain_to_bytes(chain))


def restore_chain(path) -> PosteriorChain:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise PersistenceError(f"{path}: {err}") from err
    return chain_from_bytes(blob)


def persist_model(model: SurrogateModel, path) -> None:
    std = model.standardization
    header = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "class_id": model.chain.class_id,
        "seed": model.chain.seed,
        "beta_mean": model.beta_mean.tolist(),
        "sigma2_mean": model.sigma2_mean.tolist(),
        "pi_mean": model.pi_mean.tolist(),
        "occupancy": model.occupancy.tolist(),
        "standardization": {
            "feature_mean": std.feature_mean.tolist(),
            "feature_scale": std.feature_scale.tolist(),
            "constant_mask": [bool(v) for v in std.constant_mask],
            "response_offset": std.response_offset,
        },
        "feature_names": list(model.feature_names) if model.feature_names else None,
    }
    blob = json.dumps(header).encode("utf-8") + b"\n" + chain_to_bytes(model.chain)
    Path(path).write_bytes(blob)


def restore_model(path) -> SurrogateModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise PersistenceError(f"{path}: {err}") from err
    header, chain_blob = _split_header(blob, MODEL_FORMAT)
    chain = chain_from_bytes(chain_blob)
    std = header["standardization"]
    names = header.get("feature_names")
    return SurrogateModel(
        chain=chain,
        beta_mean=np.asarray(header["beta_mean"], dtype=np.float64),
        sigma2_mean=np.asarray(header["sigma2_mean"], dtype=np.float64),
        pi_mean=np.asarray(header["pi_mean"], dtype=np.float64),
        occupancy=np.asarray(header["occupancy"], dtype=np.float64),
        standardization=Standardization(
            feature_mean=np.asarray(std["feature_mean"], dtype=np.float64),
            feature_scale=np.asarray(std["feature_scale"], dtype=np.float64),
            constant_mask=np.asarray(std["constant_mask"], dtype=bool),
            response_offset=float(std["response_offset"]),
        ),
        feature_names=tuple(names) if names else None,
    )


def persist_patterns(patterns: Sequence[Pattern], path, *, class_id: str = "0",
                     top_k: Optional[int] = None,
                     model: Optional[SurrogateModel] = None) -> None:
    entries = []
    for pat in patterns:
        entry = {
            "component": int(pat.component),
            "weights": pat.weights.tolist(),
            "energy": pat.energy.tolist(),
            "support": [int(i) for i in pat.support],
        }
        if model is not None:
            entry["pi_mean"] = float(model.pi_mean[pat.component])
            entry["occupancy"] = float(model.occupancy[pat.component])
        entries.append(entry)
    doc = {
        "format": PATTERNS_FORMAT,
        "version": FORMAT_VERSION,
        "class_id": class_id,
        "top_k": top_k,
        "patterns": entries,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def restore_patterns(path) -> list[Pattern]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise PersistenceError(f"{path}: {err}") from err
    if doc.get("format") != PATTERNS_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise PersistenceError(f"{path}: not a version-{FORMAT_VERSION} patterns file")
    out = []
    for entry in doc["patterns"]:
        out.append(
            Pattern(
                component=int(entry["component"]),
                weights=np.asarray(entry["weights"], dtype=np.float64),
                support=np.asarray(entry["support"], dtype=np.int64),
                energy=np.asarray(entry["energy"], dtype=np.float64),
            )
        )
    return out


def explanations_to_doc(explanations: Sequence[Explanation],
                        class_id: str = "0") -> dict:
    entries = []
    for exp in explanations:
        entries.append(
            {
                "sample_index": exp.sample_index,
                "component": int(exp.component),
                "assignment_confidence": float(exp.assignment_confidence),
                "truncated": bool(exp.truncated),
                "ranked_features": [
                    {"index": int(i), "name": name, "weight": float(w)}
                    for i, name, w in exp.ranked_features
                ],
            }
        )
    return {
        "format": EXPLANATIONS_FORMAT,
        "version": FORMAT_VERSION,
        "class_id": class_id,
        "explanations": entries,
    }


def persist_explanations(explanations: Sequence[Explanation], path,
                         class_id: str = "0") -> None:
    doc = explanations_to_doc(explanations, class_id)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ #
# Run configuration
# ------------------------------------------------------------------ #

@dataclass(frozen=True)
class RunConfig:
    """Validated description of one `fit` run."""

    features: str
    output_dir: str
    responses: Optional[str] = None
    adapter: Optional[str] = None
    features_header: bool = False
    responses_header: bool = False
    response_kind: str = RAW_SCORE
    classes: Optional[tuple[str, ...]] = None
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    seed: int = 0
    n_chains: int = 1
    top_k: Optional[int] = None
    shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.n_chains < 1:
            raise ConfigError(f"n_chains must be >= 1, got {self.n_chains}")
        if (self.responses is None) == (self.adapter is None):
            raise ConfigError("exactly one of 'responses' or 'adapter' is required")
        if self.response_kind not in (RAW_SCORE, PROBABILITY, LOGIT_TRANSFORMED):
            raise ConfigError(f"unknown response_kind {self.response_kind!r}")
        if self.shape is not None and len(self.shape) != 2:
            raise ConfigError("shape must be [rows, cols]")


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"{path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")

    known = {
        "features", "output_dir", "responses", "adapter", "features_header",
        "responses_header", "response_kind", "classes", "hyperparameters",
        "seed", "n_chains", "top_k", "shape",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for key in ("features", "output_dir"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key {key!r}")

    try:
        hyper = Hyperparameters(**doc.get("hyperparameters", {}))
    except (TypeError, EnetmixError) as err:
        raise ConfigError(f"{path}: bad hyperparameters: {err}") from err

    base = path.parent

    def _resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    features = _resolve(doc["features"])
    responses = _resolve(doc["responses"]) if doc.get("responses") else None
    for pth in filter(None, (features, responses)):
        if not Path(pth).exists():
            raise ConfigError(f"{path}: referenced path does not exist: {pth}")

    classes = doc.get("classes")
    shape = doc.get("shape")
    try:
        config = RunConfig(
            features=features,
            output_dir=_resolve(doc["output_dir"]),
            responses=responses,
            adapter=doc.get("adapter"),
            features_header=bool(doc.get("features_header", False)),
            responses_header=bool(doc.get("responses_header", False)),
            response_kind=doc.get("response_kind", RAW_SCORE),
            classes=tuple(str(c) for c in classes) if classes else None,
            hyper=hyper,
            seed=int(doc.get("seed", 0)),
            n_chains=int(doc.get("n_chains", 1)),
            top_k=int(doc["top_k"]) if doc.get("top_k") is not None else None,
            shape=tuple(int(v) for v in shape) if shape else None,
        )
    except EnetmixError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err
    return config


# ------------------------------------------------------------------ #
# Command-line interface
# ------------------------------------------------------------------ #

class _UsageError(EnetmixError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for
    # numerical collapse here, so route usage problems through exit 1.
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--json", action="store_true",
                        help="machine-readable JSON on stdout")
    common.add_argument("--seed", type=int, default=None,
                        help="seed override (default: config value or 0)")

    parser = _Parser(prog="enetmix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_fit = sub.add_parser("fit", parents=[common],
                           help="fit per-class surrogate models from a config")
    p_fit.add_argument("--config", required=True, help="JSON run configuration")
    p_fit.add_argument("--output-dir", default=None, help="override config output_dir")

    p_rmse = sub.add_parser("rmse", parents=[common],
                            help="approximation error of a model on a dataset")
    _add_dataset_args(p_rmse, responses_required=True)
    p_rmse.add_argument("--model", required=True)

    p_explain = sub.add_parser("explain", parents=[common],
                               help="local explanations for sample rows")
    _add_dataset_args(p_explain, responses_required=False)
    p_explain.add_argument("--model", required=True)
    p_explain.add_argument("--top-k", type=int, default=None)
    p_explain.add_argument("--importance", choices=("coefficient", "contribution"),
                           default="coefficient")
    p_explain.add_argument("--shape", type=int, nargs=2, default=None,
                           metavar=("ROWS", "COLS"))
    p_explain.add_argument("--output", default=None, help="write JSON here instead of stdout")

    p_pat = sub.add_parser("patterns", parents=[common],
                           help="global per-component patterns and heat maps")
    p_pat.add_argument("--model", required=True)
    p_pat.add_argument("--top-k", type=int, default=None)
    p_pat.add_argument("--shape", type=int, nargs=2, default=None,
                       metavar=("ROWS", "COLS"))
    p_pat.add_argument("--output-dir", required=True)

    p_craft = sub.add_parser("craft", parents=[common],
                             help="pathological samples from a pattern mask")
    p_craft.add_argument("--patterns", required=True, help="patterns JSON file")
    p_craft.add_argument("--component", type=int, default=None,
                         help="component id (default: first pattern in the file)")
    p_craft.add_argument("--base", required=True, help="CSV of base samples")
    p_craft.add_argument("--base-header", action="store_true")
    p_craft.add_argument("--threshold", type=float, required=True)
    p_craft.add_argument("--range", type=float, nargs=2, required=True,
                         metavar=("LO", "HI"))
    p_craft.add_argument("--output", required=True)

    p_sim = sub.add_parser("similarity", parents=[common],
                           help="cosine similarity of two stored patterns")
    p_sim.add_argument("--patterns-a", required=True)
    p_sim.add_argument("--patterns-b", required=True)
    p_sim.add_argument("--component-a", type=int, default=None)
    p_sim.add_argument("--component-b", type=int, default=None)
    return parser


def _add_dataset_args(parser, responses_required: bool):
    parser.add_argument("--features", required=True)
    parser.add_argument("--features-header", action="store_true")
    parser.add_argument("--responses", required=responses_required, default=None)
    parser.add_argument("--responses-header", action="store_true")
    parser.add_argument("--response-kind", choices=(RAW_SCORE, PROBABILITY),
                        default=RAW_SCORE)
    parser.add_argument("--class-id", default=None,
                        help="response column for multi-class files")


def _say(args, message: str) -> None:
    if not args.quiet and not args.json:
        print(message)


def _sanitize(class_id: str) -> str:
    return re.sub(r"[^\w.-]", "_", class_id)


def _default_top_k(top_k, shape) -> int:
    if top_k is not None:
        return top_k
    # Image-shaped outputs get the pixel-budget default, text-shaped the
    # keyword default.
    return 150 if shape is not None else 4


def _prepare(dataset: Dataset) -> Dataset:
    if dataset.response_kind == PROBABILITY:
        return logit_transform(dataset, clip_saturated=True)
    return dataset


def _load_cli_dataset(args, class_id: Optional[str] = None) -> Dataset:
    wanted = [class_id] if class_id is not None else None
    datasets = load_dataset(
        args.features,
        features_header=args.features_header,
        responses_path=args.responses,
        responses_header=args.responses_header,
        response_kind=args.response_kind,
        classes=wanted,
    )
    if len(datasets) > 1:
        raise IngestionError(
            "response file has several columns; pick one with --class-id"
        )
    return datasets[0]


def _cmd_fit(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = RunConfig(**{**asdict_config(config), "seed": args.seed})
    if args.output_dir is not None:
        config = RunConfig(**{**asdict_config(config), "output_dir": args.output_dir})

    datasets = load_dataset(
        config.features,
        features_header=config.features_header,
        responses_path=config.responses,
        responses_header=config.responses_header,
        adapter=config.adapter,
        response_kind=config.response_kind,
        classes=config.classes,
    )
    out_root = Path(config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    summary = []
    for class_idx, dataset in enumerate(datasets):
        dataset = _prepare(dataset)
        model = fit_surrogate(
            dataset, config.hyper, config.seed,
            n_chains=config.n_chains, stream_base=class_idx << 32,
        )
        class_dir = out_root / _sanitize(dataset.class_id)
        class_dir.mkdir(parents=True, exist_ok=True)

        chain_paths = []
        per_chain = config.hyper.n_draws
        for ci in range(config.n_chains):
            piece = PosteriorChain(
                draws=model.chain.draws[ci * per_chain:(ci + 1) * per_chain],
                hyper=config.hyper, seed=config.seed,
                class_id=dataset.class_id, relabeled=True,
                logliks=model.chain.logliks[ci * per_chain:(ci + 1) * per_chain],
            )
            chain_path = class_dir / f"chain_{ci:02d}.chain"
            persist_chain(piece, chain_path)
            chain_paths.append(str(chain_path))
        model_path = class_dir / "model.model"
        persist_model(model, model_path)

        train_rmse = explain_mod.rmse(model, dataset)
        summary.append(
            {
                "class_id": dataset.class_id,
                "model": str(model_path),
                "chains": chain_paths,
                "train_rmse": train_rmse,
            }
        )
        _say(args, f"[{dataset.class_id}] model -> {model_path}"
                   f" (train rmse {train_rmse:.6g})")
    if args.json:
        print(json.dumps({"command": "fit", "classes": summary}, indent=2))
    return EXIT_OK


def asdict_config(config: RunConfig) -> dict:
    return {
        "features": config.features,
        "output_dir": config.output_dir,
        "responses": config.responses,
        "adapter": config.adapter,
        "features_header": config.features_header,
        "responses_header": config.responses_header,
        "response_kind": config.response_kind,
        "classes": config.classes,
        "hyper": config.hyper,
        "seed": config.seed,
        "n_chains": config.n_chains,
        "top_k": config.top_k,
        "shape": config.shape,
    }


def _response_class(args, model) -> Optional[str]:
    """Which response column to use: explicit flag, else the model's class."""
    if args.class_id is not None:
        return args.class_id
    if args.responses_header:
        return model.chain.class_id
    return None


def _cmd_rmse(args) -> int:
    model = restore_model(args.model)
    dataset = _load_cli_dataset(args, class_id=_response_class(args, model))
    dataset = _prepare(dataset)
    value = explain_mod.rmse(model, dataset)
    if args.json:
        print(json.dumps({"command": "rmse", "class_id": model.chain.class_id,
                          "rmse": value}))
    else:
        print(f"rmse {value:.10g}")
    return EXIT_OK


def _cmd_explain(args) -> int:
    model = restore_model(args.model)
    _, X = read_csv_matrix(args.features, has_header=args.features_header)
    responses = None
    if args.responses is not None:
        dataset = _load_cli_dataset(args, class_id=_response_class(args, model))
        dataset = _prepare(dataset)
        responses = dataset.y
    top_k = _default_top_k(args.top_k, args.shape)
    explanations = []
    for i in range(X.shape[0]):
        explanations.append(
            explain_mod.local_explanation(
                model, X[i], top_k,
                response=None if responses is None else float(responses[i]),
                importance=args.importance,
                sample_index=i,
            )
        )
    doc = explanations_to_doc(explanations, class_id=model.chain.class_id)
    text = json.dumps(doc, indent=2) + "\n"
    if args.output is not None:
        Path(args.output).write_text(text, encoding="utf-8")
        _say(args, f"wrote {len(explanations)} explanations -> {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_patterns(args) -> int:
    model = restore_model(args.model)
    top_k = _default_top_k(args.top_k, args.shape)
    patterns = explain_mod.global_patterns(model, top_k)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "patterns.json"
    persist_patterns(patterns, path, class_id=model.chain.class_id,
                     top_k=top_k, model=model)
    written = [str(path)]
    if args.shape is not None:
        for pat in patterns:
            grid = explain_mod.export_heatmap(pat, tuple(args.shape))
            hm_path = out_dir / f"heatmap_{pat.component:02d}.csv"
            _write_csv_matrix(hm_path, grid)
            written.append(str(hm_path))
    if args.json:
        print(json.dumps({"command": "patterns", "files": written,
                          "components": [int(p.component) for p in patterns]}))
    else:
        _say(args, f"wrote {len(patterns)} patterns -> {path}")
    return EXIT_OK


def _pick_pattern(patterns: list[Pattern], component: Optional[int], origin: str) -> Pattern:
    if component is None:
        return patterns[0]
    for pat in patterns:
        if pat.component == component:
            return pat
    raise PersistenceError(f"{origin}: no pattern for component {component}")


def _cmd_craft(args) -> int:
    patterns = restore_patterns(args.patterns)
    pattern = _pick_pattern(patterns, args.component, args.patterns)
    _, base = read_csv_matrix(args.base, has_header=args.base_header)
    src = RandomSource(args.seed if args.seed is not None else 0)
    lo, hi = args.range
    crafted = np.stack([
        explain_mod.craft_pathological(pattern, row, args.threshold, (lo, hi), src)
        for row in base
    ])
    _write_csv_matrix(args.output, crafted)
    if args.json:
        print(json.dumps({"command": "craft", "output": args.output,
                          "rows": int(crafted.shape[0]),
                          "masked": int((pattern.energy >= args.threshold).sum())}))
    else:
        _say(args, f"wrote {crafted.shape[0]} crafted samples -> {args.output}")
    return EXIT_OK


def _cmd_similarity(args) -> int:
    pa = _pick_pattern(restore_patterns(args.patterns_a), args.component_a,
                       args.patterns_a)
    pb = _pick_pattern(restore_patterns(args.patterns_b), args.component_b,
                       args.patterns_b)
    score = explain_mod.pattern_similarity(pa, pb)
    if args.json:
        print(json.dumps({"command": "similarity", "similarity": score}))
    else:
        print(f"{score:.10g}")
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "rmse": _cmd_rmse,
    "explain": _cmd_explain,
    "patterns": _cmd_patterns,
    "craft": _cmd_craft,
    "similarity": _cmd_similarity,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code (0 ok, 1 input error,
    2 numerical collapse)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except _UsageError as err:
        print(str(err), file=sys.stderr)
        return EXIT_ERROR
    except NumericalCollapseError as err:
        print(f"error: numerical collapse: {err}", file=sys.stderr)
        return EXIT_COLLAPSE
    except (EnetmixError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
