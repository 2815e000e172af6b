#!/usr/bin/env python3
"""Generate a demo floor and serve the assistive loop for the studio UI.

    python3 scripts/serve_demo.py --port 8787 [--nextwall-ckpt path]

Then open frontend/index.html (after `npm run build` in frontend/) with
  ?service=http://127.0.0.1:8787&floor_dir=<printed path>
"""

import argparse
from pathlib import Path

from assist2plan.cli import main as cli
from assist2plan.synthetic import FloorParams, generate_synthetic_floor, save_floor


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--port", type=int, default=8787)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--rooms", type=int, default=5)
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--nextwall-ckpt", default=None)
    ap.add_argument("--edge-ckpt", default=None)
    args = ap.parse_args()

    floor = generate_synthetic_floor(args.seed, FloorParams(rooms=args.rooms))
    floor_dir = Path(args.out) / floor.floor_id
    save_floor(floor, floor_dir)
    print(f"demo floor at {floor_dir.resolve()}")
    print(f"create a session with: POST /sessions "
          f'{{"floor_dir": "{floor_dir.resolve()}", "oracle_corners": true}}')

    serve_args = ["serve", "--port", str(args.port), "--seed", str(args.seed)]
    if args.nextwall_ckpt:
        serve_args += ["--nextwall-ckpt", args.nextwall_ckpt]
    if args.edge_ckpt:
        serve_args += ["--edge-ckpt", args.edge_ckpt]
    cli(serve_args)


if __name__ == "__main__":
    main()
