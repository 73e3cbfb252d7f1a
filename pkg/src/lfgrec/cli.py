"""Command-line front door: cross-validation, training, prediction, serving."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from lfgrec import baselines
from lfgrec.baselines import BaselineModel
from lfgrec.dataset import DatasetError, load_dataset
from lfgrec.evaluate import RunSettings, emit_report, run_experiment1, run_experiment2
from lfgrec.lfg import (LfgModel, ModelFormatError, TrainConfig, infer_user,
                        init_lfg, load_model, save_model, train_lfg)
from lfgrec.linalg import fill_and_center, truncated_svd

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=["ml100k", "ml1m"], default="ml100k")
    p.add_argument("--data-dir", default="data/ml-100k")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--mask-p", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfgrec")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("crossval", help="run a 5-fold cross-validation experiment")
    _add_common(p)
    p.add_argument("--experiment", type=int, choices=[1, 2], required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out-csv", default="report.csv")
    p.add_argument("--out-md", default="report.md")

    p = sub.add_parser("train", help="train a model on the full dataset")
    _add_common(p)
    p.add_argument("--model", choices=["lfg", "funksvd", "biassvd"], default="lfg")
    p.add_argument("--out", default="model.lfg")

    p = sub.add_parser("predict", help="rank unrated items for a described user")
    p.add_argument("--model-file", required=True)
    p.add_argument("--rating", action="append", default=[], metavar="ITEM=RATING")
    p.add_argument("--age", type=int, default=30)
    p.add_argument("--gender", default="M")
    p.add_argument("--occupation", default="other")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("serve", help="serve recommendations over HTTP")
    p.add_argument("--model-file", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def _settings_from(args) -> RunSettings:
    return RunSettings(k=args.k, seed=args.seed, mask_p=args.mask_p,
                       lfg_epochs=args.epochs, lfg_batch=args.batch_size,
                       lfg_lr=args.lr)


def cmd_crossval(args) -> int:
    if args.folds != 5:
        print("only 5-fold cross-validation is supported", file=sys.stderr)
        return 2
    matrix, features = load_dataset(args.dataset, args.data_dir)
    settings = _settings_from(args)
    run = run_experiment1 if args.experiment == 1 else run_experiment2
    report = run(matrix, features, settings, dataset_name=args.dataset)
    emit_report(report, "csv", args.out_csv)
    emit_report(report, "markdown", args.out_md)
    for model, avg in report.averages().items():
        print(f"{model} average RMSE: {avg:.4f}")
    return 0


def cmd_train(args) -> int:
    matrix, features = load_dataset(args.dataset, args.data_dir)
    if args.model == "funksvd":
        model = baselines.train_funksvd(matrix, k=args.k, seed=args.seed)
    elif args.model == "biassvd":
        model = baselines.train_biassvd(matrix, k=args.k, seed=args.seed)
    else:
        mu = matrix.mean()
        svd = truncated_svd(fill_and_center(matrix, mu), args.k, args.seed)
        model = init_lfg(svd, features.codec, matrix.n, mu, k=args.k,
                         p=args.mask_p, seed=args.seed)
        train_lfg(model, matrix, features.rows,
                  TrainConfig(args.epochs, args.batch_size, args.lr), seed=args.seed)
    save_model(model, args.out)
    print(f"saved {args.model} model to {args.out}")
    return 0


def _parse_ratings(pairs: list[str]) -> dict[int, float]:
    out: dict[int, float] = {}
    for pair in pairs:
        try:
            item, rating = pair.split("=", 1)
            out[int(item)] = float(rating)
        except ValueError:
            raise DatasetError(f"malformed rating pair {pair!r}, expected ITEM=RATING")
    return out


def rank_items(model, history: dict[int, float], age: int, gender: str,
               occupation: str, top_n: int) -> list[tuple[int, float]]:
    """Top-n unrated items by predicted rating, ties by ascending item index."""
    if isinstance(model, LfgModel):
        feats = model.codec.encode(age, gender, occupation)
        row = infer_user(model, history, feats)
    elif isinstance(model, BaselineModel):
        row = np.array([baselines.predict_cold(model, i)
                        for i in range(model.Q.shape[1])])
    else:
        raise TypeError(f"cannot rank with {type(model).__name__}")
    order = sorted((i for i in range(len(row)) if i not in history),
                   key=lambda i: (-row[i], i))
    return [(i, float(row[i])) for i in order[:max(top_n, 0)]]


def cmd_predict(args) -> int:
    model = load_model(args.model_file)
    ranked = rank_items(model, _parse_ratings(args.rating), args.age,
                        args.gender, args.occupation, args.top_n)
    if args.json:
        print(json.dumps({"items": [{"item": i, "score": s} for i, s in ranked]}))
    else:
        for i, s in ranked:
            print(f"{i}\t{s:.4f}")
    return 0


# ---------------------------------------------------------------------------
# serving


class RecommendHandler(BaseHTTPRequestHandler):
    """GET /health and POST /recommend against an immutable model snapshot."""

    model = None           # set by make_server; swapped atomically on reload
    model_version = "1"

    def log_message(self, fmt, *fmt_args):
        log.info("%s " + fmt, self.address_string(), *fmt_args)

    def _send(self, code: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, {"status": "ok", "model_version": self.model_version})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/recommend":
            self._send(404, {"error": "not found"})
            return
        start = time.perf_counter()
        try:
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length))
            ratings = payload.get("ratings", [])
            history = {}
            for entry in ratings:
                item, rating = int(entry["item"]), float(entry["rating"])
                if not 1.0 <= rating <= 5.0:
                    self._send(422, {"error": f"rating {rating} outside [1,5]"})
                    return
                history[item] = rating
            ranked = rank_items(self.model, history,
                                int(payload.get("age", 30)),
                                str(payload.get("gender", "M")),
                                str(payload.get("occupation", "other")),
                                int(payload.get("top_n", 10)))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError, DatasetError) as exc:
            self._send(400, {"error": str(exc)})
            return
        except Exception:
            log.exception("recommend failed")
            self._send(500, {"error": "internal error"})
            return
        self._send(200, {"items": [{"item": i, "score": s} for i, s in ranked]})
        log.info("recommend served in %.1f ms", 1e3 * (time.perf_counter() - start))


def make_server(model, host: str, port: int) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (RecommendHandler,), {"model": model})
    return ThreadingHTTPServer((host, port), handler)


def cmd_serve(args) -> int:
    model = load_model(args.model_file)
    server = make_server(model, args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "crossval":
            return cmd_crossval(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "predict":
            return cmd_predict(args)
        if args.command == "serve":
            return cmd_serve(args)
    except (DatasetError, ModelFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
