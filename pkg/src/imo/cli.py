"""Command-line interface.

Every command other than `serve` and offline `ledger verify --file` talks
to a running gateway. Exit codes: 0 success, 1 domain error (the error
envelope is printed), 2 usage error.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
from pathlib import Path

from .canon import canonical_json
from .client import GatewayClient
from .errors import DomainError, GatewayError
from .gateway import GatewayConfig, serve
from .ledger import verify_file
from .planner import parse_lexicon
from .workflow import compile_graph, parse_graph


def _emit(doc, mode: str):
    if mode == "doc":
        print(canonical_json(doc))
        return
    _emit_table(doc)


def _emit_table(doc, indent: str = ""):
    if isinstance(doc, dict):
        for key in sorted(doc):
            value = doc[key]
            if isinstance(value, (dict, list)):
                print(f"{indent}{key}:")
                _emit_table(value, indent + "  ")
            else:
                print(f"{indent}{key}: {value}")
    elif isinstance(doc, list):
        for item in doc:
            if isinstance(item, (dict, list)):
                _emit_table(item, indent + "  ")
                print(f"{indent}-")
            else:
                print(f"{indent}- {item}")
    else:
        print(f"{indent}{doc}")


def _client(args) -> GatewayClient:
    server = args.server or os.environ.get("IMO_SERVER") or "http://127.0.0.1:8080"
    token = args.token or os.environ.get("IMO_TOKEN")
    return GatewayClient(server, token=token)


def _read_doc(path: str) -> dict:
    return json.loads(Path(path).read_text("utf-8"))


# -- commands -----------------------------------------------------------------


def cmd_push(args) -> int:
    directory = Path(args.model_dir)
    meta = _read_doc(directory / "model.json")
    name = meta.pop("name")
    artifact = directory / "artifact.bin"
    blob = artifact.read_bytes() if artifact.exists() else b""
    manifest = _client(args).push(name, blob, meta)
    if args.output == "doc":
        _emit(manifest, "doc")
    else:
        print(f"{manifest['name']}@{manifest['version']}")
    return 0


def cmd_pull(args) -> int:
    name, _, version = args.model.partition("@")
    manifest, blob = _client(args).get_model(name, version or "latest")
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "artifact.bin").write_bytes(blob)
    (dest / "manifest.json").write_text(canonical_json(manifest) + "\n", "utf-8")
    if args.output == "doc":
        _emit({"dest": str(dest), "manifest": manifest}, "doc")
    else:
        print(f"{manifest['name']}@{manifest['version']} -> {dest}")
    return 0


def cmd_search(args) -> int:
    results = _client(args).search(args.query, limit=args.limit)
    if args.output == "doc":
        _emit({"results": results}, "doc")
    else:
        for m in results:
            tags = ",".join(sorted(m["capabilities"]))
            print(f"{m['name']}@{m['version']}  [{tags}]  {m['changelog']}")
    return 0


def cmd_interpret(args) -> int:
    lexicon = None
    if args.lexicon:
        lexicon = parse_lexicon(Path(args.lexicon).read_text("utf-8"))
    task = _client(args).interpret(args.text, lexicon=lexicon)
    _emit(task, args.output)
    return 0


def _load_task(args) -> dict:
    if args.task:
        return _read_doc(args.task)
    graph = parse_graph(Path(args.graph).read_bytes())
    spec = compile_graph(graph, budget_ucr=args.budget, deadline_ms=args.deadline)
    return spec.to_doc()


def cmd_plan(args) -> int:
    task_doc = _load_task(args)
    weights = None
    if args.weights:
        w_q, w_c, w_l = (float(x) for x in args.weights.split(","))
        weights = {"w_c": w_c, "w_l": w_l, "w_q": w_q}
    candidates: dict[str, list[str]] = {}
    for pin in args.pin or []:
        sid, _, model = pin.partition("=")
        candidates[sid] = [model]
    response = _client(args).plan(task_doc, weights=weights, beam_width=args.beam,
                                  candidates=candidates or None)
    if args.out:
        Path(args.out).write_text(canonical_json(response["plan"]) + "\n", "utf-8")
    _emit(response, args.output)
    return 0


def cmd_exec(args) -> int:
    task_doc = _read_doc(args.task)
    plan_doc = _read_doc(args.plan)
    payload = Path(args.input).read_bytes() if args.input else b""
    response = _client(args).execute(task_doc, plan_doc, payload,
                                     probe_subtask=args.probe)
    _emit(response, args.output)
    return 0


def cmd_sim(args) -> int:
    config = _read_doc(args.config)
    response = _client(args).sim_run(config, post=args.post)
    _emit(response, args.output)
    return 0


def cmd_serve(args) -> int:
    config = GatewayConfig.from_file(args.config)
    if args.port is not None:
        config.port = args.port
    server = serve(config, block=False)
    print(f"listening on {config.host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_ledger_verify(args) -> int:
    if args.file:
        bad = verify_file(args.file)
    else:
        from .ledger import record_hash
        from .canon import ZERO_HASH

        bad = None
        prev = ZERO_HASH
        for i, doc in enumerate(_client(args).ledger_records()):
            if doc["index"] != i or doc["prev_hash"] != prev or \
                    record_hash(i, prev, doc["payload"], doc["timestamp"]) != doc["hash"]:
                bad = i
                break
            prev = doc["hash"]
    if bad is None:
        _emit({"ok": True}, args.output) if args.output == "doc" else print("OK")
        return 0
    _emit({"first_bad_index": bad, "ok": False}, args.output) if args.output == "doc" \
        else print(f"first bad index: {bad}")
    return 1


def cmd_ledger_balance(args) -> int:
    balance = _client(args).balance(args.account)
    if args.output == "doc":
        _emit({"account": args.account, "balance_ucr": balance}, "doc")
    else:
        print(f"{args.account}: {balance} ucr")
    return 0


def cmd_ledger_revenue(args) -> int:
    distribution = _client(args).post_revenue(
        args.model, args.amount, window_from=args.window_from, window_to=args.window_to)
    _emit(distribution, args.output)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imo", description=__doc__)
    parser.add_argument("--server", help="gateway base URL (env IMO_SERVER)")
    parser.add_argument("--token", help="bearer token (env IMO_TOKEN)")
    parser.add_argument("--output", choices=("doc", "table"), default="table")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("push", help="upload a model directory (model.json + artifact.bin)")
    p.add_argument("model_dir")
    p.set_defaults(func=cmd_push)

    p = sub.add_parser("pull", help="download a model and its manifest")
    p.add_argument("model", help="name or name@version")
    p.add_argument("--dest", default=".")
    p.set_defaults(func=cmd_pull)

    p = sub.add_parser("search", help="rank models by token overlap")
    p.add_argument("query")
    p.add_argument("--limit", type=int, default=10)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("interpret", help="turn text into a task document")
    p.add_argument("text")
    p.add_argument("--lexicon", help="keyword = tag lexicon file")
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("plan", help="plan model assignments for a task")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--task", help="task document file")
    src.add_argument("--graph", help=".wf.json workflow file to compile")
    p.add_argument("--budget", type=int)
    p.add_argument("--deadline", type=int)
    p.add_argument("--beam", type=int)
    p.add_argument("--weights", help="w_q,w_c,w_l")
    p.add_argument("--pin", action="append", metavar="SUBTASK=MODEL")
    p.add_argument("--out", help="write the plan document here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("exec", help="execute a plan on mock adapters")
    p.add_argument("--task", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--input", help="payload file")
    p.add_argument("--probe", help="subtask id for the responsiveness probe")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("sim", help="run a compute simulation config")
    p.add_argument("--config", required=True)
    p.add_argument("--post", action="store_true", help="post contributions to the ledger")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("serve", help="run the gateway")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    ledger = sub.add_parser("ledger", help="ledger operations")
    ledger_sub = ledger.add_subparsers(dest="ledger_command", required=True)

    p = ledger_sub.add_parser("verify", help="verify chain integrity")
    p.add_argument("--file", help="verify a raw ledger.log instead of the server")
    p.set_defaults(func=cmd_ledger_verify)

    p = ledger_sub.add_parser("balance", help="account balance")
    p.add_argument("account")
    p.set_defaults(func=cmd_ledger_balance)

    p = ledger_sub.add_parser("revenue", help="distribute model revenue")
    p.add_argument("model")
    p.add_argument("amount", type=int)
    p.add_argument("--window-from", type=int, default=0)
    p.add_argument("--window-to", type=int)
    p.set_defaults(func=cmd_ledger_revenue)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GatewayError, DomainError) as exc:
        envelope = {
            "code": getattr(exc, "code", getattr(exc, "wire_code", "INTERNAL")),
            "message": str(exc),
        }
        detail = getattr(exc, "detail", None)
        if detail is not None:
            envelope["detail"] = detail
        print(canonical_json(envelope), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(canonical_json({"code": "NOT_FOUND", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
