"""Command line entry point: ``mitiplan <command> [flags]``.

Commands read and write plain files under the run directory (``--out``):

    gen-orgs     orgs.jsonl
    fit-vomm     corpus.jsonl, vomm.json
    train        model.npz, train_log.jsonl
    evaluate     eval_summary.json/.csv, eval_records.jsonl [, ablation.json/.csv]
    reconstruct  paths.json, paths.txt
    plan         plan.json, plan.txt
    report       figures/*.png, report.txt

Failures print a single line ``error code=<CODE> message=<text>`` to stderr
and exit with status 2 (1 for unexpected internal errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional, Sequence

from . import DATA_DIR, __version__
from . import config as config_mod
from .adversary import AdversaryProfile, load_adversaries
from .beam import ReconstructedPath, aggregate_candidates, format_path, reconstruct_all
from .config import RunConfig
from .dqn import DQNAgent, make_episode_sampler
from .env import MitigationEnv, World, load_world
from .errors import ArtifactError, ConfigError, MitiplanError
from .evaluate import (
    DEFAULT_ABLATIONS,
    DQNPolicy,
    EmptyPolicy,
    OraclePolicy,
    RandomPolicy,
    ablation_grid,
    make_corpus,
    paired_evaluate,
)
from .flows import load_corpus_dir, write_corpus
from .maturity import load_org_profile
from .orgsynth import MaturityPrior, load_difficulties, read_population, sample_population, write_population
from .plan import build_plan
from .report import render
from .vomm import VommModel, fit

log = logging.getLogger("mitiplan")

COMMANDS = ("gen-orgs", "fit-vomm", "train", "evaluate", "reconstruct", "plan", "report")


# -- helpers ----------------------------------------------------------------------


def data_dir(cfg: RunConfig) -> Path:
    return Path(cfg.paths.data_dir) if cfg.paths.data_dir else Path(str(DATA_DIR))


def out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.paths.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ArtifactError(f"{path} not found; run '{producer}' first")
    return path


def adversary_pool(cfg: RunConfig) -> List[AdversaryProfile]:
    return load_adversaries(data_dir(cfg) / "adversaries.json")


def load_vomm(cfg: RunConfig) -> VommModel:
    return VommModel.load(require(out_dir(cfg) / "vomm.json", "fit-vomm"))


def make_world(cfg: RunConfig, vomm: Optional[VommModel] = None) -> World:
    return load_world(vomm or load_vomm(cfg), cfg.env, data_dir(cfg))


def load_agent(cfg: RunConfig, env: MitigationEnv) -> DQNAgent:
    return DQNAgent.load(require(out_dir(cfg) / "model.npz", "train"), env)


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_jsonl(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def recon_org(cfg: RunConfig):
    return load_org_profile(cfg.paths.org or (data_dir(cfg) / "org_example.json"))


def select_adversaries(cfg: RunConfig, pool: Sequence[AdversaryProfile]) -> List[AdversaryProfile]:
    if cfg.beam.adversaries is None:
        return list(pool)
    by_id = {a.adversary_id: a for a in pool}
    missing = [a for a in cfg.beam.adversaries if a not in by_id]
    if missing:
        raise ConfigError(f"unknown adversaries {missing}")
    return [by_id[a] for a in cfg.beam.adversaries]


# -- commands -----------------------------------------------------------------------


def cmd_gen_orgs(cfg: RunConfig, args) -> None:
    prior = MaturityPrior(tuple(cfg.orgs.class_probs), cfg.orgs.noise_sd, cfg.seed)
    orgs = sample_population(prior, load_difficulties(data_dir(cfg) / "practices.json"), cfg.orgs.count)
    path = out_dir(cfg) / "orgs.jsonl"
    write_population(orgs, path)
    print(f"wrote {len(orgs)} organizations to {path}")


def cmd_fit_vomm(cfg: RunConfig, args) -> None:
    flows = Path(cfg.paths.flows_dir) if cfg.paths.flows_dir else data_dir(cfg) / "flows"
    corpus = load_corpus_dir(flows)
    extra = {t for a in adversary_pool(cfg) for t in a.observed_techniques}
    model = fit(corpus, cfg.vomm.max_order, cfg.vomm.alpha, cfg.vomm.min_support, extra)
    out = out_dir(cfg)
    write_corpus(corpus, out / "corpus.jsonl")
    model.save(out / "vomm.json")
    print(f"fitted VOMM on {len(corpus)} sequences, vocabulary {model.vocab_size}, K={model.max_order}")


def cmd_train(cfg: RunConfig, args) -> None:
    out = out_dir(cfg)
    orgs = read_population(require(out / "orgs.jsonl", "gen-orgs"))
    env = MitigationEnv(make_world(cfg))
    agent = DQNAgent(env, cfg.dqn)
    logs = agent.train(make_episode_sampler(orgs, adversary_pool(cfg), cfg.env.n_adversaries, cfg.seed))
    agent.save(out / "model.npz")
    write_jsonl(out / "train_log.jsonl", logs)
    tail = logs[-min(100, len(logs)):]
    wins = sum(r["outcome"] == "win" for r in tail) / max(1, len(tail))
    print(f"trained {len(logs)} episodes ({agent.updates} updates); last-{len(tail)} win rate {wins:.3f}")


def build_policies(cfg: RunConfig, env: MitigationEnv):
    policies = []
    for name in cfg.eval.policies:
        if name == "dqn":
            policies.append(DQNPolicy(load_agent(cfg, env)))
        elif name == "oracle":
            policies.append(OraclePolicy())
        elif name == "random":
            policies.append(RandomPolicy(cfg.eval.random_seed))
        elif name == "none":
            policies.append(EmptyPolicy())
        else:
            raise ConfigError(f"unknown policy {name!r}")
    return policies


def eval_population(cfg: RunConfig):
    # held out from training: same prior, separate seed
    prior = MaturityPrior(tuple(cfg.orgs.class_probs), cfg.orgs.noise_sd, cfg.eval.corpus_seed)
    return sample_population(prior, load_difficulties(data_dir(cfg) / "practices.json"), cfg.orgs.count, "eval")


def cmd_evaluate(cfg: RunConfig, args) -> None:
    out = out_dir(cfg)
    world = make_world(cfg)
    env = MitigationEnv(world)
    pool = adversary_pool(cfg)
    corpus = make_corpus(eval_population(cfg), pool, cfg.env.n_adversaries, cfg.eval.episodes, cfg.eval.corpus_seed)
    reference = "oracle" if "oracle" in cfg.eval.policies else None
    result = paired_evaluate(
        env, build_policies(cfg, env), corpus, alpha=cfg.eval.alpha, beta=cfg.eval.beta,
        reference=reference, expected_seed=cfg.eval.corpus_seed, workers=args.workers,
    )
    write_json(out / "eval_summary.json", result.to_dict())
    (out / "eval_summary.csv").write_text(result.to_csv())
    write_jsonl(out / "eval_records.jsonl", (asdict(r) for r in result.records))
    from .report import EVAL_COLUMNS, format_table

    print(format_table(result.table(), EVAL_COLUMNS))
    if cfg.eval.ablations:
        unknown = [a for a in cfg.eval.ablations if a not in DEFAULT_ABLATIONS]
        if unknown:
            raise ConfigError(f"unknown ablations {unknown}; known: {sorted(DEFAULT_ABLATIONS)}")
        orgs = read_population(require(out / "orgs.jsonl", "gen-orgs"))
        rows = ablation_grid(
            world, orgs, pool, cfg.dqn, corpus, {a: DEFAULT_ABLATIONS[a] for a in cfg.eval.ablations},
            seed=cfg.seed, alpha=cfg.eval.alpha, beta=cfg.eval.beta, workers=args.workers,
            progress=lambda name, s: print(f"ablation {name}: J={s.j:.4f} win={s.win:.3f}"),
        )
        write_json(out / "ablation.json", rows)
        import csv, io

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=[k for k in rows[0] if k != "overrides"], extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
        (out / "ablation.csv").write_text(buf.getvalue())


def cmd_reconstruct(cfg: RunConfig, args) -> None:
    out = out_dir(cfg)
    world = make_world(cfg)
    env = MitigationEnv(world)
    agent = load_agent(cfg, env)
    org = recon_org(cfg)
    maturity = world.maturity_of(org).values
    advs = select_adversaries(cfg, adversary_pool(cfg))
    # one query on the root observation fixes the portfolio for every search
    state, obs = env.reset_with_maturity(org.org_id, maturity, advs, cfg.seed)
    q = agent.q_values(obs)
    portfolio, paths = reconstruct_all(
        world, maturity, advs, q, cfg.beam.beam(), cfg.seed, org.org_id, args.workers
    )
    write_json(
        out / "paths.json",
        {
            "org_id": org.org_id,
            "maturity": dict(zip(world.mitigation_ids, maturity)),
            "portfolio": {"mitigations": list(portfolio.mitigations), "costs": list(portfolio.costs)},
            "paths": [p.to_dict() for p in paths],
        },
    )
    (out / "paths.txt").write_text("\n\n".join(format_path(p) for p in paths) + "\n")
    print(f"root portfolio {list(portfolio.mitigations)} cost {portfolio.total_cost:.2f}")
    print(f"reconstructed {len(paths)} paths for {len(advs)} adversaries")


def cmd_plan(cfg: RunConfig, args) -> None:
    out = out_dir(cfg)
    doc = json.loads(require(out / "paths.json", "reconstruct").read_text())
    paths = [ReconstructedPath.from_dict(p) for p in doc["paths"]]
    world = make_world(cfg)
    maturity = [doc["maturity"][m] for m in world.mitigation_ids]
    costs = world.mitigation_costs(maturity)
    plan = build_plan(aggregate_candidates(paths), costs, cfg.plan.budget, tuple(cfg.plan.weights))
    write_json(out / "plan.json", {"org_id": doc["org_id"], **plan.to_dict()})
    names = {m: info.name for m, info in world.mitigations.items()}
    table = plan.text_table(names)
    (out / "plan.txt").write_text(table + "\n")
    print(table)


def cmd_report(cfg: RunConfig, args) -> None:
    for path in render(out_dir(cfg)):
        print(f"wrote {path}")


HANDLERS = {
    "gen-orgs": cmd_gen_orgs,
    "fit-vomm": cmd_fit_vomm,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "reconstruct": cmd_reconstruct,
    "plan": cmd_plan,
    "report": cmd_report,
}


# -- argument handling ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="run directory for artifacts")
    common.add_argument("--workers", type=int, default=1, help="parallel workers for evaluate/reconstruct")
    common.add_argument(
        "--budget", type=float,
        help="defender budget for train/evaluate, reconstruction budget for reconstruct, plan budget for plan",
    )
    common.add_argument("--beam-width", type=int, help="beam width k")
    common.add_argument("--beam-depth", type=int, help="beam depth d")
    common.add_argument("--episodes", type=int, help="training episodes (train) or paired episodes (evaluate)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="mitiplan", description="Mitigation portfolio planning pipeline.")
    parser.add_argument("--version", action="version", version=f"mitiplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "gen-orgs": "sample a synthetic organization population",
        "fit-vomm": "parse attack flows and fit the technique model",
        "train": "train the DQN defender",
        "evaluate": "paired evaluation against baselines (and optional ablations)",
        "reconstruct": "beam-search attack/defense paths per adversary",
        "plan": "choose the final mitigation plan from reconstructed paths",
        "report": "render figures and a text report",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def effective_config(args) -> RunConfig:
    cfg = config_mod.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = cfg.override("paths", out=args.out)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if args.budget is not None:
        if args.budget < 0:
            raise ConfigError("--budget must be >= 0")
        if args.command in ("train", "evaluate"):
            cfg = cfg.override("env", defender_budget=args.budget)
        elif args.command == "reconstruct":
            cfg = cfg.override("beam", budget=args.budget)
        elif args.command == "plan":
            cfg = cfg.override("plan", budget=args.budget)
    if args.beam_width is not None:
        cfg = cfg.override("beam", width=args.beam_width)
    if args.beam_depth is not None:
        cfg = cfg.override("beam", depth=args.beam_depth)
    if args.episodes is not None:
        if args.command == "evaluate":
            cfg = cfg.override("eval", episodes=args.episodes)
        else:
            cfg = cfg.override("dqn", episodes=args.episodes)
    return cfg.override("dqn", seed=cfg.seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        print(f"# mitiplan {args.command} seed={cfg.seed}")
        print("# effective config")
        print("\n".join("#   " + line for line in cfg.dump().splitlines()))
        HANDLERS[args.command](cfg, args)
    except MitiplanError as exc:
        print(f"error code={exc.code} message={_one_line(exc)}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error code=IO_ERROR message={_one_line(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        print(f"error code=INTERNAL message={type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
