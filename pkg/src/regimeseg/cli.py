"""Command-line pipeline: fit, eval, compare, sweep-k, gen-synth, summarize.

Machine-readable results go to stdout or files; diagnostics go to stderr.
Exit codes: 0 success, 2 usage or input error, 3 numerical failure. Every
command honouring ``--seed`` is bit-reproducible; ``REGIME_SEG_SEED`` is
the fallback seed (default 0).
"""

from __future__ import annotations

import argparse
import csv
import io as stdio
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import LabelSequence, Modality, derive_seed, standardize
from .errors import (
    EmptyStateCollapse,
    NumericalUnderflow,
    ParseError,
    RegimeSegError,
)
from .gaussian_hmm import EmConfig, HmmModel, fit_em, fit_em_pooled, forward_loglik, viterbi
from .io import (
    LoadedConversation,
    load_corpus,
    read_labels,
    read_manifest,
    read_model,
    read_series,
    regime_va_table,
    write_labels,
    write_model,
    write_series,
)
from .metrics import MetricReport, aggregate_reports, evaluate
from .sticky import NiwPrior, StickyConfig, StickyPosterior, fit as fit_sticky
from .synthetic import SynthConfig, generate

SEED_ENV = "REGIME_SEG_SEED"

_HIGHER_BETTER = ("segment_f1", "boundary_f1", "nmi", "temporal_purity", "mean_regime_duration")
_LOWER_BETTER = ("single_utterance_fraction", "regime_shifts", "transition_entropy")
_UNDIRECTED = (
    "intra_regime_variance",
    "inter_regime_centroid_distance",
    "effective_regimes",
    "dominant_regime_share",
)
_METRIC_ORDER = _HIGHER_BETTER + _LOWER_BETTER + _UNDIRECTED


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class RegimeSummary:
    """Fields behind the emitted regime block."""

    phase: str  # "history_taking" | "assessment_management"
    regime_label: str
    valence: float
    arousal: float
    persistence_turns: int
    stability: str  # "stable" | "unstable"
    shifts_so_far: int


def build_regime_summary(
    labels: LabelSequence, regimes: list[dict], query_turn: int
) -> RegimeSummary:
    """Summarize the decoded sequence at one query turn.

    The consultation is in the history-taking phase while the query index
    is under 60% of the turn count; a regime is stable once it has
    persisted more than 5 consecutive turns.
    """
    T = len(labels)
    if not 0 <= query_turn < T:
        raise IndexError(f"query turn {query_turn} out of range for T={T}")
    arr = labels.labels
    current = int(arr[query_turn])
    persistence = 1
    t = query_turn - 1
    while t >= 0 and arr[t] == current:
        persistence += 1
        t -= 1
    shifts = int(np.sum(arr[1 : query_turn + 1] != arr[:query_turn]))
    phase = "history_taking" if query_turn < 0.6 * T else "assessment_management"
    name = labels.name_of(current)
    regime_index = int(name) if name.isdigit() else current
    if not 0 <= regime_index < len(regimes):
        raise ParseError(
            f"label {name!r} has no regime entry in the model (model has {len(regimes)})"
        )
    va = regimes[regime_index]
    return RegimeSummary(
        phase=phase,
        regime_label=f"R{name}",
        valence=float(va["valence"]),
        arousal=float(va["arousal"]),
        persistence_turns=persistence,
        stability="stable" if persistence > 5 else "unstable",
        shifts_so_far=shifts,
    )


def _fmt2(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def format_regime_block(s: RegimeSummary) -> str:
    phase = "history-taking" if s.phase == "history_taking" else "assessment/management"
    return (
        "[Emotional Regime Summary]\n"
        f"Consultation phase: {phase}\n"
        f"Current regime: {s.regime_label} (valence: {_fmt2(s.valence)}, arousal: {_fmt2(s.arousal)})\n"
        f"Regime persistence: {s.persistence_turns} consecutive turns ({s.stability})\n"
        f"Regime shifts so far: {s.shifts_so_far}\n"
    )


# ---------------------------------------------------------------- plumbing


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ParseError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _load_input(path: str) -> list[LoadedConversation]:
    """A manifest yields its corpus; a bare series file yields one
    per-conversation-standardized conversation without references."""
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc}") from None
        if isinstance(doc, dict) and "conversations" in doc:
            return load_corpus(read_manifest(path))
    series = read_series(path)
    return [LoadedConversation(id=series.id, series=standardize(series), reference=None)]


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_modalities(spec: str) -> tuple[Modality, ...]:
    try:
        mods = tuple(Modality(tok.strip()) for tok in spec.split(","))
    except ValueError:
        raise ParseError(f"unknown modality in {spec!r} (use txt,aud,vid)") from None
    if len(set(mods)) != len(mods):
        raise ParseError(f"duplicate modality in {spec!r}")
    return mods


def _pred_labels_for(pred_path: str, conv_id: str) -> LabelSequence:
    if os.path.isdir(pred_path):
        candidate = os.path.join(pred_path, f"{conv_id}.labels.csv")
        if not os.path.exists(candidate):
            raise ParseError(f"no decoded labels for conversation {conv_id!r} in {pred_path}")
        return read_labels(candidate)
    return read_labels(pred_path)


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    corpus = _load_input(args.input)
    seed = _resolve_seed(args)
    os.makedirs(args.out_dir, exist_ok=True)
    if args.model == "hmm" and args.k is None:
        print("error: --model hmm requires --k", file=sys.stderr)
        return 2
    out = stdio.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["conversation", "loglik", "effective_k"])
    if args.model == "hmm" and args.pooled:
        cfg = EmConfig(
            K=args.k, max_iters=args.max_iters, tol=args.tol, n_restarts=args.restarts, seed=seed
        )
        result = fit_em_pooled([c.series for c in corpus], cfg)
        for c in corpus:
            _write_hmm_outputs(result.model, c, args.out_dir, writer)
    else:
        for i, c in enumerate(corpus):
            child = derive_seed(seed, i)
            if args.model == "hmm":
                cfg = EmConfig(
                    K=args.k,
                    max_iters=args.max_iters,
                    tol=args.tol,
                    n_restarts=args.restarts,
                    seed=child,
                )
                result = fit_em(c.series, cfg)
                _write_hmm_outputs(result.model, c, args.out_dir, writer)
            else:
                cfg = _sticky_config(args, child)
                posterior = fit_sticky(c.series, cfg, NiwPrior())
                _write_sticky_outputs(posterior, c, args.out_dir, writer, args.save_samples)
            _info(f"fitted {c.id}")
    sys.stdout.write(out.getvalue())
    return 0


def _sticky_config(args, seed: int) -> StickyConfig:
    fixed = None
    sample_hypers = True
    if args.fixed_hypers:
        parts = [float(x) for x in args.fixed_hypers.split(",")]
        if len(parts) != 3:
            raise ParseError("--fixed-hypers needs alpha,kappa,gamma")
        fixed = (parts[0], parts[1], parts[2])
        sample_hypers = False
    return StickyConfig(
        k_max=args.k_max,
        burn_in=args.burn_in,
        n_samples=args.samples,
        thin=args.thin,
        seed=seed,
        sample_hypers=sample_hypers,
        fixed_hypers=fixed,
    )


def _write_hmm_outputs(model: HmmModel, conv: LoadedConversation, out_dir, writer) -> None:
    labels, _ = viterbi(model, conv.series)
    ll = forward_loglik(model, conv.series)
    write_model(model, os.path.join(out_dir, f"{conv.id}.model.json"))
    write_labels(labels, os.path.join(out_dir, f"{conv.id}.labels.csv"))
    writer.writerow([conv.id, repr(ll), int(np.unique(labels.labels).size)])


def _write_sticky_outputs(
    posterior: StickyPosterior, conv: LoadedConversation, out_dir, writer, save_samples
) -> None:
    log_obs = kernels.log_obs_matrix(
        conv.series.values, posterior.mean_means, posterior.mean_covs
    )
    with np.errstate(divide="ignore"):
        ll = kernels.forward_loglik(
            np.log(posterior.mean_init), np.log(posterior.mean_pi), log_obs
        )
    write_model(
        posterior, os.path.join(out_dir, f"{conv.id}.model.json"), include_samples=save_samples
    )
    write_labels(posterior.labels, os.path.join(out_dir, f"{conv.id}.labels.csv"))
    writer.writerow([conv.id, repr(float(ll)), posterior.effective_k])


def cmd_eval(args) -> int:
    corpus = _load_input(args.input)
    reports: dict[str, MetricReport] = {}
    for c in corpus:
        pred = _pred_labels_for(args.pred, c.id)
        reports[c.id] = evaluate(pred, c.reference, c.series)
    mean = aggregate_reports(list(reports.values()))
    if args.format == "json":
        doc = {
            "conversations": {cid: r.to_dict() for cid, r in sorted(reports.items())},
            "corpus_mean": mean,
        }
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        keys = [k for k in _METRIC_ORDER if k in mean]
        writer.writerow(["conversation"] + keys)
        for cid, r in sorted(reports.items()):
            d = r.to_dict()
            writer.writerow([cid] + [repr(d[k]) if k in d else "" for k in keys])
        writer.writerow(["corpus_mean"] + [repr(mean[k]) for k in keys])
    return 0


def cmd_compare(args) -> int:
    corpus = _load_input(args.input)
    name_a, name_b = (args.names.split(",") + ["a", "b"])[:2] if args.names else ("a", "b")
    rows_a, rows_b = {}, {}
    for c in corpus:
        rows_a[c.id] = evaluate(_pred_labels_for(args.a, c.id), c.reference, c.series)
        rows_b[c.id] = evaluate(_pred_labels_for(args.b, c.id), c.reference, c.series)
    ids = sorted(rows_a)
    table = []
    for key in _METRIC_ORDER:
        va = [getattr(rows_a[i], key) for i in ids]
        vb = [getattr(rows_b[i], key) for i in ids]
        if any(v is None for v in va + vb):
            continue
        va = [float(v) for v in va]
        vb = [float(v) for v in vb]
        entry = {
            "metric": key,
            f"mean_{name_a}": float(np.mean(va)),
            f"mean_{name_b}": float(np.mean(vb)),
            "mean_diff": float(np.mean(va) - np.mean(vb)),
        }
        if key in _HIGHER_BETTER or key in _LOWER_BETTER:
            sign = 1.0 if key in _HIGHER_BETTER else -1.0
            wins_a = sum(1 for x, y in zip(va, vb) if sign * (x - y) > 0)
            wins_b = sum(1 for x, y in zip(va, vb) if sign * (y - x) > 0)
            entry[f"wins_{name_a}"] = wins_a
            entry[f"wins_{name_b}"] = wins_b
            entry["ties"] = len(ids) - wins_a - wins_b
        table.append(entry)
    if args.format == "json":
        doc = {
            "metrics": table,
            "conversations": {
                i: {name_a: rows_a[i].to_dict(), name_b: rows_b[i].to_dict()} for i in ids
            },
        }
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        header = [
            "metric",
            f"mean_{name_a}",
            f"mean_{name_b}",
            "mean_diff",
            f"wins_{name_a}",
            f"wins_{name_b}",
            "ties",
        ]
        writer.writerow(header)
        for entry in table:
            writer.writerow([entry.get(h, "") for h in header])
    return 0


def cmd_sweep_k(args) -> int:
    if args.k_min < 1 or args.k_min > args.k_max:
        print(f"error: invalid K range ({args.k_min}, {args.k_max})", file=sys.stderr)
        return 2
    corpus = _load_input(args.input)
    seed = _resolve_seed(args)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["k", "log_likelihood", "mean_regime_duration", "transition_entropy"])
    from .metrics import temporal_stats, transition_entropy

    for k in range(args.k_min, args.k_max + 1):
        lls, durations, entropies = [], [], []
        for i, c in enumerate(corpus):
            cfg = EmConfig(
                K=k,
                max_iters=args.max_iters,
                tol=args.tol,
                n_restarts=args.restarts,
                seed=derive_seed(seed, i, k),
            )
            result = fit_em(c.series, cfg)
            labels, _ = viterbi(result.model, c.series)
            lls.append(result.loglik)
            durations.append(temporal_stats(labels)[0])
            entropies.append(transition_entropy(labels) if len(labels) >= 2 else 0.0)
        writer.writerow(
            [k, repr(float(np.mean(lls))), repr(float(np.mean(durations))), repr(float(np.mean(entropies)))]
        )
        _info(f"swept K={k}")
    return 0


def cmd_gen_synth(args) -> int:
    seed = _resolve_seed(args)
    os.makedirs(args.out_dir, exist_ok=True)
    modalities = _parse_modalities(args.modalities)
    entries = []
    for i in range(args.n_conversations):
        cfg = SynthConfig(
            k_true=args.k_true,
            length=args.length,
            self_transition=args.self_transition,
            covariance_scale=args.covariance_scale,
            min_separation=args.min_separation,
            modalities=modalities,
            decoupling=args.decoupling,
            seed=derive_seed(seed, i),
        )
        conv_id = f"conv{i:03d}"
        series, labels = generate(cfg, id=conv_id)
        series_name = f"{conv_id}.series.{args.format}"
        labels_name = f"{conv_id}.truth.csv"
        write_series(series, os.path.join(args.out_dir, series_name), format=args.format)
        write_labels(labels, os.path.join(args.out_dir, labels_name))
        entries.append({"id": conv_id, "series": series_name, "labels": labels_name})
    manifest = {"standardization_scope": "per_conversation", "conversations": entries}
    with open(os.path.join(args.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    _info(
        f"generated {args.n_conversations} conversation(s): K={args.k_true} T={args.length} "
        f"self_transition={args.self_transition} scale={args.covariance_scale} "
        f"decoupling={args.decoupling} modalities={args.modalities} seed={seed}"
    )
    return 0


def cmd_summarize(args) -> int:
    model = read_model(args.model)
    labels = read_labels(args.labels)
    regimes = regime_va_table(model)
    query = args.query_turn if args.query_turn is not None else len(labels) // 2
    try:
        summary = build_regime_summary(labels, regimes, query)
    except IndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(format_regime_block(summary))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regimeseg",
        description="Segment multimodal valence-arousal conversations into emotional regimes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and decode each conversation")
    p.add_argument("input", help="manifest JSON or a single series file")
    p.add_argument("--model", choices=["hmm", "sticky"], required=True)
    p.add_argument("--k", type=int, help="state count (hmm)")
    p.add_argument("--k-max", type=int, default=8, help="truncation level (sticky)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--restarts", type=int, default=5, help="EM restarts (hmm)")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--pooled", action="store_true", help="fit one hmm on the whole corpus")
    p.add_argument("--burn-in", type=int, default=500, help="discarded sweeps (sticky)")
    p.add_argument("--samples", type=int, default=500, help="retained sweeps (sticky)")
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--fixed-hypers", help="alpha,kappa,gamma; disables hyper resampling")
    p.add_argument("--save-samples", action="store_true", help="embed retained samples in the model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score decoded labels, Table-style")
    p.add_argument("input")
    p.add_argument("--pred", required=True, help="decoded-labels dir or file")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired comparison of two decodings")
    p.add_argument("input")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--names", help="labels for the two sides, e.g. sticky,hmm")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-k", help="per-K diagnostics for the hmm baseline")
    p.add_argument("input")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=12)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("gen-synth", help="generate a synthetic corpus with truth labels")
    p.add_argument("--k-true", type=int, required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--self-transition", type=float, required=True)
    p.add_argument("--covariance-scale", type=float, default=1.0)
    p.add_argument("--decoupling", type=float, default=0.0)
    p.add_argument("--min-separation", type=float)
    p.add_argument("--modalities", default="txt", help="comma list of txt,aud,vid")
    p.add_argument("--n-conversations", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("summarize", help="emit the emotional-regime summary block")
    p.add_argument("--model", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--query-turn", type=int, help="defaults to the midpoint T//2")
    p.set_defaults(func=cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NumericalUnderflow, EmptyStateCollapse, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (RegimeSegError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
