"""Command-line interface: ``logitcohort {synth,enroll,score,eval}``.

Every command writes plain files into ``--out`` together with a single
``run_manifest.json`` recording the configuration and input digests.  Errors
are reported on stderr as one line, ``error: <ErrorClass>: <message>``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import FormatError, LogitCohortError, ParameterError
from .evaluation import DEFAULT_FMR, partition_scores, tmr_at_fmr, write_roc_table
from .fileio import load_role_vectors, read_matrix, read_protocol, read_template, write_matrix, write_template
from .linalg import WeightMatrix, compute_logits_batch
from .locos import DEFAULT_K, SelectionStrategy, Strategy
from .pipeline import METHOD_NAMES, Flow, MethodConfig, ScoreMatrix, enroll, score_protocol, score_templates
from .ranklist import DEFAULT_LAMBDA, RankSimParams
from .synth import SynthConfig, generate, write_synth

MANIFEST = "run_manifest.json"
SCORES_FILE = "scores.lcv"
MASK_FILE = "genuine.lcv"
_STRATEGY_FLAGS = {"first": Strategy.FIRST_K, "top": Strategy.TOP_K, "topbottom": Strategy.TOP_BOTTOM, "probe": Strategy.PROBE_TOP_K}


class UsageError(LogitCohortError):
    """Malformed command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return when.replace(microsecond=0).isoformat()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, inputs: Dict[str, Path], seed=None) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}
    manifest = {
        "tool": "logitcohort",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": _digest(p)} for name, p in sorted(inputs.items())},
        "seed": seed,
        "timestamp": _timestamp(),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _role_inputs(args, protocol, roles) -> tuple:
    """Load the vectors of ``roles`` and return them with the files they came from."""
    base = Path(args.protocol).parent
    vectors, inputs = {}, {}
    for role in roles:
        override = getattr(args, role, None)
        matrix = None
        if override is not None:
            matrix = read_matrix(override)
            inputs[role] = Path(override)
        elif any(s.ref.isdigit() for s in protocol.samples(role)):
            inputs[role] = base / f"{role}.lcv"
        for s in protocol.samples(role):
            if not s.ref.isdigit():
                inputs[f"{role}:{s.sample_id}"] = base / s.ref
        vectors[role] = load_role_vectors(protocol, role, base, matrix)
    return vectors, inputs


def _strategy(args) -> SelectionStrategy:
    kind = _STRATEGY_FLAGS[args.strategy]
    if kind is Strategy.TOP_BOTTOM:
        return SelectionStrategy(kind, args.K, args.T, args.B)
    if args.T is not None or args.B is not None:
        raise ParameterError("--T/--B apply only to the topbottom strategy")
    return SelectionStrategy(kind, args.K)


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    config = SynthConfig(
        num_identities=args.ids,
        dim=args.dim,
        num_eval=args.eval,
        sigma_gallery=args.sigma_gallery,
        sigma_probe=args.sigma_probe,
        seed=args.seed,
        num_cohort=args.cohort,
        disjoint=args.disjoint,
    )
    out = _outdir(args.out)
    write_synth(generate(config), out)
    _write_manifest(out, "synth", args, {}, seed=args.seed)
    return 0


def cmd_enroll(args) -> int:
    protocol = read_protocol(args.protocol)
    strategy = _strategy(args)
    vectors, inputs = _role_inputs(args, protocol, ["gallery"])
    inputs["protocol"] = Path(args.protocol)
    logits = vectors["gallery"]
    if args.weights:
        inputs["weights"] = Path(args.weights)
        logits = compute_logits_batch(logits, WeightMatrix(read_matrix(args.weights)))
    out = _outdir(args.out)
    for i, t in enumerate(enroll(protocol, logits, strategy)):
        write_template(t, out / f"t{i:06d}.lct")
    _write_manifest(out, "enroll", args, inputs)
    return 0


def _load_templates(directory) -> List:
    files = sorted(Path(directory).glob("t*.lct"))
    if not files:
        raise FormatError(f"no template files (t*.lct) in {directory}")
    return files, [read_template(f) for f in files]


def cmd_score(args) -> int:
    protocol = read_protocol(args.protocol)
    params = RankSimParams(k=args.k_cutoff, lam=args.lam, normalize=args.normalize)
    config = MethodConfig.from_name(args.method, K=args.K, T=args.T, B=args.B, params=params)
    inputs: Dict[str, Path] = {"protocol": Path(args.protocol)}
    weights = None
    if args.weights:
        if config.flow in (Flow.BASELINE, Flow.COHORT):
            raise ParameterError(f"--weights has no effect on method {config.name}")
        inputs["weights"] = Path(args.weights)
        weights = WeightMatrix(read_matrix(args.weights))

    if args.templates:
        if config.strategy is None:
            raise ParameterError("--templates can only be scored with a logit-selection method")
        files, templates = _load_templates(args.templates)
        for f in files:
            inputs[f"template:{f.name}"] = f
        vectors, more = _role_inputs(args, protocol, ["probe"])
        inputs.update(more)
        probe = vectors["probe"]
        if weights is not None:
            probe = compute_logits_batch(probe, weights)
        result = score_templates(protocol, templates, probe, config)
    else:
        roles = ["gallery", "probe"]
        if config.flow is Flow.COHORT:
            roles += ["cohort_gallery", "cohort_probe"]
        vectors, more = _role_inputs(args, protocol, roles)
        inputs.update(more)
        result = score_protocol(protocol, vectors, config, weights=weights)

    out = _outdir(args.out)
    write_matrix(result.scores, out / SCORES_FILE)
    write_matrix(result.genuine.astype(np.float32), out / MASK_FILE)
    _write_manifest(out, "score", args, inputs)
    return 0


def load_scores(directory) -> ScoreMatrix:
    d = Path(directory)
    scores = read_matrix(d / SCORES_FILE)
    mask = read_matrix(d / MASK_FILE)
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise FormatError(f"{d / MASK_FILE}: genuine mask must hold only 0 and 1")
    return ScoreMatrix(scores, mask == 1.0)


def cmd_eval(args) -> int:
    d = Path(args.scores)
    matrix = load_scores(d)
    report = tmr_at_fmr(*partition_scores(matrix), target=args.fmr)
    method = None
    manifest = d / MANIFEST
    if manifest.exists():
        method = json.loads(manifest.read_text(encoding="utf-8")).get("config", {}).get("method")
    out = _outdir(args.out)
    summary = {"method": method, **report.as_dict()}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_roc_table(report.curve, out / "roc.tsv")
    _write_manifest(out, "eval", args, {"scores": d / SCORES_FILE, "genuine": d / MASK_FILE})
    flag = " resolution_limited" if report.resolution_limited else ""
    print(f"method={method} tmr={report.tmr_at_target:.3f} target_fmr={args.fmr:g} "
          f"threshold={report.threshold!r} genuine={report.curve.num_genuine} "
          f"impostor={report.curve.num_impostor}{flag}")
    return 0


# --- parser -------------------------------------------------------------------


def _add_selection_flags(p, with_strategy: bool) -> None:
    if with_strategy:
        p.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="top",
                       help="logit selection: first K, top K, top+bottom, or probe-driven (default: %(default)s)")
    p.add_argument("--K", type=int, default=DEFAULT_K, help="number of selected logits (default: %(default)s)")
    p.add_argument("--T", type=int, default=None, help="top segment size for top+bottom (default: ceil(K/2))")
    p.add_argument("--B", type=int, default=None, help="bottom segment size for top+bottom (default: floor(K/2))")


def _add_vector_flags(p, roles) -> None:
    for role in roles:
        p.add_argument(f"--{role.replace('_', '-')}", dest=role, type=Path, default=None,
                       help=f"matrix file for {role} row references (default: <protocol dir>/{role}.lcv)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="logitcohort", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic weight matrix and protocol")
    p.add_argument("--ids", type=int, default=2000, help="number of training identities C (default: %(default)s)")
    p.add_argument("--dim", type=int, default=128, help="embedding dimension D (default: %(default)s)")
    p.add_argument("--eval", type=int, default=100, help="identities in the gallery/probe protocol (default: %(default)s)")
    p.add_argument("--cohort", type=int, default=0, help="cohort identities under both conditions (default: %(default)s)")
    p.add_argument("--sigma-gallery", type=float, default=0.0, help="gallery angular noise, radians (default: %(default)s)")
    p.add_argument("--sigma-probe", type=float, default=0.0, help="probe angular noise, radians (default: %(default)s)")
    p.add_argument("--disjoint", action="store_true", help="evaluated identities are not rows of the weight matrix")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("enroll", help="build gallery templates from selected logits")
    p.add_argument("--protocol", required=True, type=Path)
    p.add_argument("--weights", type=Path, default=None,
                   help="weight matrix; without it the gallery vectors are taken as logits")
    _add_vector_flags(p, ["gallery"])
    _add_selection_flags(p, with_strategy=True)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("score", help="score every gallery/probe pair of a protocol")
    p.add_argument("--protocol", required=True, type=Path)
    p.add_argument("--method", required=True, help="one of: " + ", ".join(METHOD_NAMES))
    p.add_argument("--weights", type=Path, default=None,
                   help="weight matrix for logit methods; without it vectors are taken as logits")
    p.add_argument("--templates", type=Path, default=None, help="directory of enrolled templates (from 'enroll')")
    _add_vector_flags(p, ["gallery", "probe", "cohort_gallery", "cohort_probe"])
    _add_selection_flags(p, with_strategy=False)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="S3 decay, strictly between 0 and 1 (default: %(default)s)")
    p.add_argument("--k-cutoff", type=int, default=None, help="S2 rank cutoff (default: cohort size)")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                   help="normalize S1/S3 to (0, 1]")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="ROC and TMR at a target FMR from a score directory")
    p.add_argument("--scores", required=True, type=Path, help="output directory of 'score'")
    p.add_argument("--fmr", type=float, default=DEFAULT_FMR, help="target false match rate (default: %(default)s)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except LogitCohortError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (ParameterError, UsageError)) else 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
