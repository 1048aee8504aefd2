"""Command-line front end: scenario runs, offline scoring, paired comparisons.

Exit codes: 0 success, 2 validation problems (bad scenario, unknown backend,
missing files) with a diagnostic naming the offending path, 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ScenarioConfig
from .detect import principal_subcommunities
from .errors import ConfigError, DegenerateInput, PluralError, TooSmall
from .fabric import SocialFabric
from .score import (ContentItem, ReactionMatrix, ScoreSet, ScoringParams,
                    score_round)
from . import sim as simulation

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _write_outputs(out_dir: Path, result) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    community_ids = sorted(result.fabric.communities)
    (out_dir / "metrics.csv").write_text(
        simulation.metrics_csv(result.metrics, community_ids), encoding="utf-8")
    with open(out_dir / "feeds.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rec in result.feed_records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    (out_dir / "ledger.csv").write_text(result.ledger.to_csv(), encoding="utf-8")
    (out_dir / "fabric.json").write_text(result.fabric.to_json(indent=2), encoding="utf-8")
    cards = result.scores.to_csv() if result.scores is not None else ScoreSet().to_csv()
    (out_dir / "scorecards.csv").write_text(cards, encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    """Execute one scenario and write every artifact under --out."""
    try:
        config = ScenarioConfig.load(args.scenario)
    except ConfigError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = simulation.run(config, seed=args.seed, rounds=args.rounds)
        _write_outputs(Path(args.out), result)
    except PluralError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    """One-shot scoring pass over a reactions log against a fabric snapshot."""
    if args.backend not in ScoringParams.BACKENDS:
        print(f"unknown backend {args.backend!r}; valid backends: "
              f"{', '.join(ScoringParams.BACKENDS)}", file=sys.stderr)
        return EXIT_CONFIG
    reactions_path, fabric_path = Path(args.reactions), Path(args.fabric)
    for path in (reactions_path, fabric_path):
        if not path.exists():
            print(f"file not found: {path}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        fabric = SocialFabric.from_json(fabric_path.read_text(encoding="utf-8"))
        text = reactions_path.read_text(encoding="utf-8")
        reactions = ReactionMatrix.from_csv(text) if text.strip() else ReactionMatrix()

        catalog: dict[int, ContentItem] = {}
        current_round = 0
        for mid in reactions.contents():
            participants = reactions.citizens_for(mid)
            targets = {cid for cid, comm in fabric.communities.items()
                       if comm.members & participants}
            if not targets:
                continue
            rounds = [cell.round for _, cell in reactions.by_content(mid)]
            current_round = max([current_round] + rounds)
            catalog[mid] = ContentItem(id=mid, creator=min(participants),
                                       created_round=min(rounds),
                                       target_communities=targets)
        if catalog:
            matrix = reactions.to_attitudes(row_ids=sorted(fabric.citizens))
            for cid in sorted(fabric.communities):
                try:
                    principal_subcommunities(fabric, cid, matrix, seed=0)
                except (TooSmall, DegenerateInput):
                    pass
        params = dataclasses.replace(ScoringParams(), backend=args.backend)
        scores = score_round(fabric, catalog, reactions, params, current_round)
        Path(args.out).write_text(scores.to_csv(), encoding="utf-8")
    except PluralError as exc:
        print(f"scoring failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


_COMPARE_METRICS = ("mean_common_belief_top_bridging", "polarization_index",
                    "attention_gini", "platform_revenue")


def compare_runs(config: ScenarioConfig, n_seeds: int) -> list[dict]:
    """Paired bridging-vs-baseline runs over n_seeds consecutive seeds.

    The baseline flips scoring to popularity_only (psi = iota); everything
    else, including the seed, matches its bridging partner.
    """
    rows = []
    for i in range(n_seeds):
        seed = config.seed + i
        bridging_cfg = dataclasses.replace(
            config, seed=seed,
            scoring=dataclasses.replace(config.scoring, popularity_only=False))
        baseline_cfg = dataclasses.replace(
            config, seed=seed,
            scoring=dataclasses.replace(config.scoring, popularity_only=True))
        bridging = simulation.run(bridging_cfg)
        baseline = simulation.run(baseline_cfg)
        row = {"seed": seed}
        for name in _COMPARE_METRICS:
            b = getattr(bridging.metrics[-1], name) if bridging.metrics else 0.0
            e = getattr(baseline.metrics[-1], name) if baseline.metrics else 0.0
            row[f"bridging_{name}"] = b
            row[f"baseline_{name}"] = e
            row[f"delta_{name}"] = b - e
        rows.append(row)
    return rows


def comparison_csv(rows: list[dict]) -> str:
    import csv as _csv
    import io as _io
    buf = _io.StringIO()
    cols = ["seed"]
    for name in _COMPARE_METRICS:
        cols += [f"bridging_{name}", f"baseline_{name}", f"delta_{name}"]
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([row["seed"]] + [repr(row[c]) for c in cols[1:]])
    summary = ["summary"]
    for name in _COMPARE_METRICS:
        deltas = [row[f"delta_{name}"] for row in rows]
        pos = sum(1 for d in deltas if d > 0)
        neg = sum(1 for d in deltas if d < 0)
        zero = len(deltas) - pos - neg
        summary += ["", "", f"+{pos}/-{neg}/={zero}"]
    w.writerow(summary)
    return buf.getvalue()


def cmd_compare(args: argparse.Namespace) -> int:
    """Run the bridging-vs-engagement-baseline harness over paired seeds."""
    try:
        config = ScenarioConfig.load(args.scenario)
    except ConfigError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seeds < 1:
        print("--seeds must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = compare_runs(config, args.seeds)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "comparison.csv").write_text(comparison_csv(rows), encoding="utf-8")
    except PluralError as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plural",
        description="Communitarian feed mechanism: simulate, score, compare.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and export artifacts")
    p_run.add_argument("--scenario", required=True, help="scenario JSON path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--rounds", type=int, default=None, help="override the round count")
    p_run.set_defaults(func=cmd_run)

    p_score = sub.add_parser("score", help="score a reactions log offline")
    p_score.add_argument("--reactions", required=True, help="reactions CSV path")
    p_score.add_argument("--fabric", required=True, help="fabric JSON path")
    p_score.add_argument("--backend", default="gac_penrose",
                         help="bridging backend (gac_uniform | gac_penrose | mf)")
    p_score.add_argument("--out", required=True, help="scorecards CSV path")
    p_score.set_defaults(func=cmd_score)

    p_cmp = sub.add_parser("compare", help="paired bridging-vs-baseline runs")
    p_cmp.add_argument("--scenario", required=True, help="scenario JSON path")
    p_cmp.add_argument("--seeds", type=int, default=10, help="number of paired seeds")
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
