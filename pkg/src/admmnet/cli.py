"""Command line: ``admmnet {run,compare,gen-graph,gen-data,tune-beta}``."""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, backend
from .consensus import DivergenceError
from .graph import GraphError, generate_connected_graph, write_edge_list
from .harness import (
    ALGORITHMS,
    ExperimentSpec,
    SpecError,
    build_instance,
    compare,
    format_summary,
    generate_dataset,
    run_experiment,
    sub_seeds,
    tune_beta,
)
from .inner import InnerSolverError
from .problem import write_matrix_csv


def _load_spec(path, args):
    spec = ExperimentSpec.from_file(path) if path else ExperimentSpec()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "max_iter", None) is not None:
        changes["max_outer"] = args.max_iter
    if changes:
        spec = spec.replace(**changes)
    return spec


def _with_algo(spec, algo):
    if algo is None:
        return spec
    if algo not in ALGORITHMS:
        raise SpecError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    return spec.replace(algorithm=algo)


def cmd_run(args):
    spec = _with_algo(_load_spec(args.config, args), args.algo)
    out = args.out or spec.output or None
    _, summary = run_experiment(spec, out=out)
    sys.stdout.write(format_summary(summary))
    return 0


def cmd_compare(args):
    configs = args.config or [None]
    algos = args.algo.split(",") if args.algo else [None]
    specs = [_with_algo(_load_spec(c, args), a) for c in configs for a in algos]
    _, report = compare(specs)
    sys.stdout.write(report["table"])
    for k, v in report["ordering"].items():
        sys.stdout.write(f"{k}: {v}\n")
    if args.out:
        Path(args.out).write_text(report["csv"])
    return 0


def cmd_gen_graph(args):
    spec = _load_spec(args.config, args)
    graph_seed, _, _ = sub_seeds(spec.seed)
    g = generate_connected_graph(spec.n_agents, spec.graph_density, graph_seed, spec.force_non_bipartite)
    out = args.out or "graph.txt"
    write_edge_list(g, out)
    sys.stdout.write(f"agents: {g.n_agents}\nedges: {g.n_edges}\npath: {out}\n")
    return 0


def cmd_gen_data(args):
    spec = _load_spec(args.config, args)
    data = generate_dataset(spec)
    out = Path(args.out or "data")
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "features.csv", data.features)
    write_matrix_csv(out / "labels.csv", data.labels)
    write_matrix_csv(out / "planted.csv", data.planted)
    sys.stdout.write(
        f"rows: {data.features.shape[0]}\ncols: {data.features.shape[1]}\n"
        f"planted_nonzeros: {int(np.count_nonzero(data.planted))}\npath: {out}\n"
    )
    return 0


def cmd_tune_beta(args):
    spec = _with_algo(_load_spec(args.config, args), args.algo)
    inst = build_instance(spec, with_reference=False)
    mins, betas = tune_beta(spec, inst)
    lines = ["agent beta_min beta"]
    lines += [f"{i} {float(m)!r} {float(b)!r}" for i, (m, b) in enumerate(zip(mins, betas))]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="admmnet", description="Decentralized consensus ADMM experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({backend.name} kernels)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi_config=False):
        if multi_config:
            sp.add_argument("--config", action="append", help="spec file (repeatable)")
        else:
            sp.add_argument("--config", help="spec file of key = value lines")
        sp.add_argument("--seed", type=int, help="master seed (overrides the spec)")
        sp.add_argument("--out", help="output path")

    r = sub.add_parser("run", help="run one experiment and write its trace CSV")
    common(r)
    r.add_argument("--algo", help="algorithm (overrides the spec)")
    r.add_argument("--max-iter", type=int, help="outer-round budget (overrides the spec)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several algorithms on one instance")
    common(c, multi_config=True)
    c.add_argument("--algo", help="comma-separated algorithms applied to every config")
    c.add_argument("--max-iter", type=int, help="outer-round budget (overrides the specs)")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen-graph", help="write the spec's communication graph as an edge list")
    common(g)
    g.set_defaults(func=cmd_gen_graph)

    d = sub.add_parser("gen-data", help="write the spec's synthetic dataset as CSV files")
    common(d)
    d.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("tune-beta", help="print per-agent beta thresholds and margin-rule choices")
    common(t)
    t.add_argument("--algo", help="algorithm (overrides the spec)")
    t.set_defaults(func=cmd_tune_beta)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, GraphError, OSError) as exc:
        sys.stderr.write(f"admmnet: error: {exc}\n")
        return 2
    except (DivergenceError, InnerSolverError) as exc:
        sys.stderr.write(f"admmnet: run failed: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
