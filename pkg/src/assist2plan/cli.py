"""Command-line entry point: dataset generation, training, evaluation, replay,
and the assist service.

Every command takes --config (flat key=value file), --seed, --out, and
--data; flags win over the config file. The data root defaults to the
ASSIST2PLAN_DATA environment variable. Outputs (checkpoints, CSV tables,
SVG plots, effective configs) land in the --out directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .baselines import (
    ClassifierModel,
    ClassifierTrainConfig,
    classifier_next,
    heuristic_next,
    train_classifier,
)
from .config import Resolver, load_config, save_config
from .enumeration import (
    CornerOracle,
    CornerTrainConfig,
    EdgeClassifier,
    EdgeClassifierConfig,
    EdgeTrainConfig,
    detect_corners,
    enumerate_and_classify,
    train_corner_scorer,
    train_edge_classifier,
)
from .geometry import match_walls, remove_duplicates
from .nextwall import (
    NextWallConfig,
    NextWallModel,
    NextWallTrainConfig,
    assign_timesteps,
    history_length_table,
    rollout,
    train_next_wall,
)
from .ordermetric import (
    TcnConfig,
    TcnModel,
    evaluate_order,
    gt_replay_generator,
    order_scores_to_csv,
    random_order_generator,
    train_tcn,
)
from .sessions import load_session, replay
from .synthetic import (
    FloorParams,
    generate_synthetic_floor,
    load_floors,
    save_floor,
    split_floor_ids,
    write_manifest,
)


def _data_root(value) -> Path:
    if value:
        return Path(value)
    env = os.environ.get("ASSIST2PLAN_DATA")
    if env:
        return Path(env)
    raise SystemExit("no data root: pass --data or set ASSIST2PLAN_DATA")


def _out_dir(args) -> Path:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolver(args) -> Resolver:
    cfg = load_config(args.config) if args.config else {}
    return Resolver(cfg)


def _finish(res: Resolver, out: Path, command: str, seed) -> int:
    res.effective["command"] = command
    res.effective["seed"] = seed
    save_config(out / f"{command}.config", res.effective)
    return 0


def cmd_gen_floors(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    seed = res.get("seed", args.seed, 0, int)
    count = res.get("count", args.count, 20, int)
    rooms_min = res.get("rooms_min", args.rooms_min, 3, int)
    rooms_max = res.get("rooms_max", args.rooms_max, 6, int)
    extent = res.get("extent", args.extent, 256, int)

    rng = np.random.default_rng(seed)
    ids = []
    for i in range(count):
        params = FloorParams(
            rooms=int(rng.integers(rooms_min, rooms_max + 1)),
            extent=(extent, extent),
        )
        floor = generate_synthetic_floor(seed * 100_000 + i, params)
        save_floor(floor, out / floor.floor_id)
        ids.append(floor.floor_id)
    write_manifest(out, ids, split_floor_ids(ids, seed))
    print(f"wrote {count} floors under {out}")
    return _finish(res, out, "gen-floors", seed)


def cmd_train_edge(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    steps = res.get("steps", args.steps, 500, int)
    corner_steps = res.get("corner_steps", args.corner_steps, 200, int)
    n_ref = res.get("n_ref_points", args.n_ref_points, 16, int)

    floors = load_floors(data, "train")
    clf = train_edge_classifier(
        floors,
        EdgeTrainConfig(
            steps=steps, seed=seed,
            model=EdgeClassifierConfig(n_ref_points=n_ref, seed=seed),
        ),
        log_every=max(1, steps // 10),
    )
    ad.save_checkpoint(out / "edge.ckpt", clf.state_dict())
    if corner_steps > 0:
        scorer = train_corner_scorer(
            floors, CornerTrainConfig(steps=corner_steps, seed=seed),
            log_every=max(1, corner_steps // 5),
        )
        ad.save_checkpoint(out / "corner.ckpt", scorer.state_dict())
    print(f"checkpoints under {out}")
    return _finish(res, out, "train-edge", seed)


def cmd_train_next_wall(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    steps = res.get("steps", args.steps, 3000, int)
    batch = res.get("batch", args.batch, 8, int)

    floors = load_floors(data, "train")
    model = train_next_wall(
        floors,
        NextWallTrainConfig(steps=steps, batch=batch, seed=seed,
                            model=NextWallConfig(seed=seed)),
        log_every=max(1, steps // 10),
    )
    ad.save_checkpoint(out / "nextwall.ckpt", model.state_dict())
    print(f"checkpoint under {out}")
    return _finish(res, out, "train-next-wall", seed)


def cmd_train_classifier(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    steps = res.get("steps", args.steps, 1500, int)

    floors = load_floors(data, "train")
    model = train_classifier(
        floors,
        ClassifierTrainConfig(steps=steps, seed=seed, model=NextWallConfig(seed=seed)),
        log_every=max(1, steps // 10),
    )
    ad.save_checkpoint(out / "classifier.ckpt", model.state_dict())
    print(f"checkpoint under {out}")
    return _finish(res, out, "train-classifier", seed)


def cmd_train_tcn(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    iterations = res.get("iterations", args.iterations, 20000, int)

    floors = load_floors(data, "train")
    model = train_tcn(
        floors, TcnConfig(iterations=iterations, seed=seed),
        log_every=max(1, iterations // 10),
    )
    ad.save_checkpoint(out / "tcn.ckpt", model.state_dict())
    print(f"checkpoint under {out}")
    return _finish(res, out, "train-tcn", seed)


def _load_nextwall(path, seed: int = 0) -> NextWallModel:
    model = NextWallModel(NextWallConfig(seed=seed))
    if path:
        model.load_state_dict(ad.load_checkpoint(path))
    model.eval()
    return model


def cmd_eval_recon(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    split = res.get("split", args.split, "test", str)
    thresholds = (5.0, 15.0, 30.0)

    clf = EdgeClassifier(EdgeClassifierConfig(seed=seed))
    clf.load_state_dict(ad.load_checkpoint(args.edge_ckpt))
    clf.eval()
    floors = load_floors(data, split)
    rows = ["floor,threshold,precision,recall,f1,iou,width_accuracy"]
    for floor in floors:
        det = CornerOracle(corners=floor.corners, seed=seed)
        corners = detect_corners(floor.density, det)
        cands = enumerate_and_classify(corners, floor.density, clf)
        pred = remove_duplicates([c.wall for c in cands], [])
        for th in thresholds:
            r = match_walls(pred, floor.walls, th)
            rows.append(
                f"{floor.floor_id},{th:.0f},{r.precision:.4f},{r.recall:.4f},"
                f"{r.f1:.4f},{r.iou:.4f},{r.width_accuracy:.4f}"
            )
    (out / "recon.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {out / 'recon.csv'}")
    return _finish(res, out, "eval-recon", seed)


def _plot_svg(path, series: dict[str, tuple[list, list]], xlabel: str, ylabel: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_eval_order(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    split = res.get("split", args.split, "test", str)
    methods = res.get("methods", args.methods, "nextwall,heuristic,random,gt", str)
    lengths = tuple(range(1, 11))

    floors = load_floors(data, split)
    tcn = TcnModel(TcnConfig(seed=seed))
    tcn.load_state_dict(ad.load_checkpoint(args.tcn_ckpt))
    tcn.eval()

    wall_source = res.get("wall_source", args.wall_source, "gt", str)
    candidate_source = None
    if wall_source == "predicted":
        if not args.edge_ckpt:
            raise SystemExit("--wall-source predicted needs --edge-ckpt")
        from .enumeration import predicted_wall_pool

        pred_clf = EdgeClassifier(EdgeClassifierConfig(seed=seed))
        pred_clf.load_state_dict(ad.load_checkpoint(args.edge_ckpt))
        pred_clf.eval()
        candidate_source = lambda f: predicted_wall_pool(f, pred_clf)  # noqa: E731
    elif wall_source != "gt":
        raise SystemExit(f"unknown wall source {wall_source!r}")

    generators = {}
    for name in methods.split(","):
        name = name.strip()
        if name == "gt":
            if wall_source != "gt":
                raise SystemExit("gt replay only applies to the gt wall source")
            generators[name] = gt_replay_generator
        elif name == "random":
            generators[name] = random_order_generator
        elif name == "nextwall":
            model = _load_nextwall(args.nextwall_ckpt, seed)

            def gen_model(floor, pool, start, steps, rng, _m=model):
                rest = [w for i, w in enumerate(pool) if i != start]
                state = assign_timesteps([pool[start]], rest)
                return [pool[start]] + rollout(state, _m, steps)

            generators[name] = gen_model
        elif name == "heuristic":

            def gen_heuristic(floor, pool, start, steps, rng):
                history = [pool[start]]
                rest = [w for i, w in enumerate(pool) if i != start]
                for _ in range(steps):
                    if not rest:
                        break
                    state = assign_timesteps(history, rest)
                    idx = heuristic_next(state, seed=int(rng.integers(2**31)))
                    history.append(rest.pop(idx))
                return history

            generators[name] = gen_heuristic
        elif name == "classifier":
            cls = ClassifierModel(NextWallConfig(seed=seed))
            cls.load_state_dict(ad.load_checkpoint(args.classifier_ckpt))
            cls.eval()

            def gen_classifier(floor, pool, start, steps, rng, _m=cls):
                history = [pool[start]]
                rest = [w for i, w in enumerate(pool) if i != start]
                for _ in range(steps):
                    if not rest:
                        break
                    state = assign_timesteps(history, rest)
                    history.append(rest.pop(classifier_next(state, _m)))
                return history

            generators[name] = gen_classifier
        else:
            raise SystemExit(f"unknown method {name!r}")

    results = evaluate_order(
        generators, floors, tcn, lengths=lengths, seed=seed,
        candidate_source=candidate_source,
    )
    (out / "order.csv").write_text(order_scores_to_csv(results))
    series = {
        name: (sorted(scores), [scores[k] for k in sorted(scores)])
        for name, scores in results.items()
        if scores
    }
    _plot_svg(out / "order.svg", series, "rollout length", "Fréchet score")
    print(f"wrote {out / 'order.csv'} and order.svg")
    return _finish(res, out, "eval-order", seed)


def cmd_eval_history(args) -> int:
    res = _resolver(args)
    out = _out_dir(args)
    data = _data_root(args.data)
    seed = res.get("seed", args.seed, 0, int)
    split = res.get("split", args.split, "test", str)
    lengths = res.get("lengths", args.lengths, "1..9", str)
    lo, hi = lengths.split("..")
    length_range = tuple(range(int(lo), int(hi) + 1))

    floors = load_floors(data, split)
    model = _load_nextwall(args.nextwall_ckpt, seed)
    rows = history_length_table(model, floors, length_range)
    csv = ["length,accuracy,entropy,random"]
    csv.extend(
        f"{r['length']},{r['accuracy']:.4f},{r['entropy']:.4f},{r['random']:.4f}"
        for r in rows
    )
    (out / "history.csv").write_text("\n".join(csv) + "\n")
    _plot_svg(
        out / "history.svg",
        {
            "accuracy": ([r["length"] for r in rows], [r["accuracy"] for r in rows]),
            "entropy": ([r["length"] for r in rows], [r["entropy"] for r in rows]),
        },
        "history length",
        "value",
    )
    print(f"wrote {out / 'history.csv'} and history.svg")
    return _finish(res, out, "eval-history", seed)


def cmd_replay(args) -> int:
    sessions = [load_session(p) for p in args.session]
    result = replay(sessions)
    doc = {
        "walls": [
            {"id": wid, "x0": w.x0, "y0": w.y0, "x1": w.x1, "y1": w.y1,
             "thickness": w.thickness}
            for wid, w in zip(result.ids, result.walls)
        ]
    }
    if args.out:
        out = _out_dir(args)
        (out / "replay.json").write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {out / 'replay.json'}")
    else:
        json.dump(doc, sys.stdout, indent=2)
        print()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    res = _resolver(args)
    seed = res.get("seed", args.seed, 0, int)
    host = res.get("host", args.host, "127.0.0.1", str)
    port = res.get("port", args.port, 8787, int)
    config = ServiceConfig(
        seed=seed,
        nextwall_checkpoint=args.nextwall_ckpt,
        edge_checkpoint=args.edge_ckpt,
        nextwall=NextWallConfig(seed=seed),
        edge=EdgeClassifierConfig(seed=seed),
    )
    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assist2plan")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--data", default=None)

    p = sub.add_parser("gen-floors", help="generate a synthetic floor dataset")
    common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--rooms-min", type=int, default=None)
    p.add_argument("--rooms-max", type=int, default=None)
    p.add_argument("--extent", type=int, default=None)
    p.set_defaults(fn=cmd_gen_floors)

    p = sub.add_parser("train-edge", help="train the edge/thickness classifier")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--corner-steps", type=int, default=None)
    p.add_argument("--n-ref-points", type=int, default=None)
    p.set_defaults(fn=cmd_train_edge)

    p = sub.add_parser("train-next-wall", help="train the next-wall predictor")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.set_defaults(fn=cmd_train_next_wall)

    p = sub.add_parser("train-classifier", help="train the sequence classifier baseline")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("train-tcn", help="train the order-metric autoencoder")
    common(p)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(fn=cmd_train_tcn)

    p = sub.add_parser("eval-recon", help="precision/recall/IoU/width accuracy")
    common(p)
    p.add_argument("--edge-ckpt", required=True)
    p.add_argument("--split", default=None)
    p.set_defaults(fn=cmd_eval_recon)

    p = sub.add_parser("eval-order", help="Fréchet order metric per rollout length")
    common(p)
    p.add_argument("--tcn-ckpt", required=True)
    p.add_argument("--nextwall-ckpt", default=None)
    p.add_argument("--classifier-ckpt", default=None)
    p.add_argument("--edge-ckpt", default=None)
    p.add_argument("--methods", default=None)
    p.add_argument("--wall-source", default=None, choices=[None, "gt", "predicted"])
    p.add_argument("--split", default=None)
    p.set_defaults(fn=cmd_eval_order)

    p = sub.add_parser("eval-history", help="accuracy/entropy vs history length")
    common(p)
    p.add_argument("--nextwall-ckpt", default=None)
    p.add_argument("--lengths", default=None)
    p.add_argument("--split", default=None)
    p.set_defaults(fn=cmd_eval_history)

    p = sub.add_parser("replay", help="replay session JSON files")
    p.add_argument("session", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="run the assist service")
    common(p)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--nextwall-ckpt", default=None)
    p.add_argument("--edge-ckpt", default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
