"""HTTP gateway binding every module into one wire protocol.

All endpoints live under /v1 and speak key-sorted UTF-8 JSON. Failures
map onto a closed set of six envelope codes; mutating verbs require a
bearer token; every request and response carries the protocol version
header and versions above the current one are rejected.
"""

from __future__ import annotations

import base64
import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .cache import OutputCache, normalize_request
from .canon import canonical_bytes, canonical_json, sha256_hex
from .errors import (
    ConfigError,
    DomainError,
    GatewayError,
    InfeasiblePlan,
    MissingField,
    NotFound,
    UnfinishedSimulation,
    UnknownSubtask,
    ValidationError,
)
from .ledger import AccountOpen, Agreement, Ledger
from .memory import MemoryStream
from .planner import (
    OptimalPathStore,
    PathPlan,
    PlannerWeights,
    interpret_request,
    parse_lexicon,
    plan,
    refine_plan,
)
from .registry import Registry, now_ms
from .runtime import execute_plan, score_report, with_responsiveness
from .sim import parse_sim_config, post_contributions, run_simulation
from .workflow import TaskSpec

PROTOCOL_VERSION = 1
PROTOCOL_HEADER = "X-SMIP-Protocol"

_STATUS_BY_CODE = {
    "NOT_FOUND": 404,
    "INVALID_FORMAT": 400,
    "UNAUTHORIZED": 401,
    "CONFLICT": 409,
    "TOO_LARGE": 413,
    "INTERNAL": 500,
}

DEFAULT_LEXICON = {
    "translate": "translate",
    "summarize": "summarize",
    "classify": "classify",
    "extract": "extract",
}


@dataclass
class GatewayConfig:
    data_dir: Path
    host: str = "127.0.0.1"
    port: int = 0
    tokens: dict[str, str] = field(default_factory=dict)  # token -> account
    cache_capacity: int = 256
    cache_entry_cap_bytes: int = 1024 * 1024
    weights: PlannerWeights = field(default_factory=PlannerWeights)
    treasury_account: str = "treasury"
    breakthrough_reward_ucr: int = 0
    lexicon: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_LEXICON))
    sweep_interval_s: float = 60.0
    warmup_file: Path | None = None
    plan_cache_ttl_ms: int | None = None

    @classmethod
    def from_doc(cls, doc: dict, base_dir: Path | None = None) -> "GatewayConfig":
        if "data_dir" not in doc:
            raise ConfigError("config must name data_dir")
        base = base_dir or Path.cwd()
        data_dir = Path(doc["data_dir"])
        if not data_dir.is_absolute():
            data_dir = base / data_dir
        planner_doc = doc.get("planner", {})
        weights = PlannerWeights(
            w_q=float(planner_doc.get("w_q", 1.0)),
            w_c=float(planner_doc.get("w_c", 0.25)),
            w_l=float(planner_doc.get("w_l", 0.25)),
            beam_width=int(planner_doc.get("beam_width", 8)),
        )
        lexicon = doc.get("lexicon")
        if lexicon is None and doc.get("lexicon_file"):
            lex_path = Path(doc["lexicon_file"])
            if not lex_path.is_absolute():
                lex_path = base / lex_path
            lexicon = parse_lexicon(lex_path.read_text("utf-8"))
        warmup = doc.get("warmup_file")
        if warmup is not None:
            warmup = Path(warmup)
            if not warmup.is_absolute():
                warmup = base / warmup
        return cls(
            data_dir=data_dir,
            host=doc.get("host", "127.0.0.1"),
            port=int(doc.get("port", 0)),
            tokens=dict(doc.get("tokens", {})),
            cache_capacity=int(doc.get("cache_capacity", 256)),
            cache_entry_cap_bytes=int(doc.get("cache_entry_cap_bytes", 1024 * 1024)),
            weights=weights,
            treasury_account=doc.get("treasury_account", "treasury"),
            breakthrough_reward_ucr=int(doc.get("breakthrough_reward_ucr", 0)),
            lexicon=dict(lexicon) if lexicon else dict(DEFAULT_LEXICON),
            sweep_interval_s=float(doc.get("sweep_interval_s", 60.0)),
            warmup_file=warmup,
            plan_cache_ttl_ms=doc.get("plan_cache_ttl_ms"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_doc(doc, base_dir=path.parent)


class Gateway:
    """Routes wire requests onto module operations; holds all service state."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        config.data_dir.mkdir(parents=True, exist_ok=True)
        self.registry = Registry(config.data_dir / "store")
        self.cache = OutputCache(config.cache_capacity, config.cache_entry_cap_bytes)
        self.ledger = Ledger(config.data_dir / "ledger.log")
        self.paths = OptimalPathStore()
        self.memories = MemoryStream()
        self._uploads: dict[str, dict] = {}
        self._uploads_lock = threading.Lock()
        for account in sorted({config.treasury_account, *config.tokens.values()}):
            if account and account not in self.ledger.known_accounts:
                self.ledger.append(AccountOpen(account=account))
        if config.warmup_file is not None:
            self.cache.load_warmup(config.warmup_file, now=now_ms())
        self._routes = [
            ("GET", re.compile(r"/v1/healthz$"), self._op_healthz, False),
            ("PUT", re.compile(r"/v1/blobs/(?P<digest>[0-9a-f]{64})$"), self._op_put_blob, True),
            ("POST", re.compile(r"/v1/models/(?P<name>[^/]+)/versions$"), self._op_post_version, True),
            ("GET", re.compile(r"/v1/models/(?P<name>[^/]+)/versions$"), self._op_list_versions, False),
            ("GET", re.compile(r"/v1/models/(?P<name>[^/]+)/versions/(?P<version>[^/]+)$"), self._op_get_model, False),
            ("POST", re.compile(r"/v1/models/(?P<name>[^/]+)/rollback$"), self._op_rollback, True),
            ("GET", re.compile(r"/v1/models$"), self._op_search, False),
            ("POST", re.compile(r"/v1/cache/lookup$"), self._op_cache_lookup, True),
            ("POST", re.compile(r"/v1/interpret$"), self._op_interpret, True),
            ("POST", re.compile(r"/v1/plans$"), self._op_plans, True),
            ("POST", re.compile(r"/v1/execute$"), self._op_execute, True),
            ("GET", re.compile(r"/v1/paths/records/(?P<task_hash>[0-9a-f]{64})$"), self._op_path_record, False),
            ("POST", re.compile(r"/v1/ledger/revenue$"), self._op_revenue, True),
            ("GET", re.compile(r"/v1/ledger/records$"), self._op_ledger_records, False),
            ("GET", re.compile(r"/v1/ledger/accounts/(?P<account>[^/]+)/balance$"), self._op_balance, False),
            ("POST", re.compile(r"/v1/sim/run$"), self._op_sim_run, True),
        ]

    # -- request plumbing ---------------------------------------------------

    def handle(self, method: str, path: str, headers: dict, body: bytes):
        """Returns (status, response doc). Never raises."""
        try:
            self._check_protocol(headers)
            target, query = path, ""
            if "?" in path:
                target, query = path.split("?", 1)
            for verb, pattern, handler, needs_auth in self._routes:
                match = pattern.match(target)
                if not match:
                    continue
                if verb != method:
                    continue
                account = None
                if needs_auth:
                    account = self._authenticate(headers)
                return handler(match.groupdict(), _parse_query(query), headers, body, account)
            raise NotFound(f"no route for {method} {target}")
        except GatewayError as exc:
            return _envelope(exc.code, str(exc), exc.detail)
        except UnfinishedSimulation as exc:
            return _envelope(exc.wire_code, str(exc), {"unfinished": exc.job_ids})
        except DomainError as exc:
            return _envelope(exc.wire_code, str(exc), getattr(exc, "detail", None))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            return _envelope("INVALID_FORMAT", f"malformed request: {exc}")
        except Exception as exc:  # never a bare 5xx
            return _envelope("INTERNAL", f"unexpected failure: {exc}")

    def _check_protocol(self, headers):
        raw = _header(headers, PROTOCOL_HEADER)
        if raw is None:
            return
        try:
            version = int(raw)
        except ValueError:
            raise GatewayError("INVALID_FORMAT", f"bad protocol version {raw!r}",
                               detail={"supported": PROTOCOL_VERSION}) from None
        if version > PROTOCOL_VERSION:
            raise GatewayError("INVALID_FORMAT", f"protocol version {version} unsupported",
                               detail={"supported": PROTOCOL_VERSION})

    def _authenticate(self, headers) -> str:
        auth = _header(headers, "Authorization") or ""
        if auth.startswith("Bearer "):
            token = auth[len("Bearer "):].strip()
            account = self.config.tokens.get(token)
            if account:
                return account
        raise GatewayError("UNAUTHORIZED", "missing or invalid bearer token")

    # -- registry ops ---------------------------------------------------------

    def _op_healthz(self, params, query, headers, body, account):
        return 200, {"protocol": PROTOCOL_VERSION, "status": "ok"}

    def _op_put_blob(self, params, query, headers, body, account):
        digest = params["digest"]
        content_range = _header(headers, "Content-Range")
        if content_range is None:
            if sha256_hex(body) != digest:
                raise ValidationError("body does not hash to the addressed digest")
            self.registry.blobs.put(body)
            return 200, {"complete": True, "digest": digest, "size_bytes": len(body)}
        start, end, total = _parse_content_range(content_range)
        if end - start + 1 != len(body):
            raise ValidationError("Content-Range does not match body length")
        with self._uploads_lock:
            session = self._uploads.setdefault(
                digest, {"total": total, "buffer": bytearray(total), "covered": set()})
            if session["total"] != total:
                raise ValidationError("conflicting Content-Range totals")
            session["buffer"][start:end + 1] = body
            session["covered"].add((start, end))
            received = _covered(session["covered"], total)
            if received < total:
                return 200, {"complete": False, "digest": digest, "received_bytes": received}
            data = bytes(session["buffer"])
            del self._uploads[digest]
        if sha256_hex(data) != digest:
            raise ValidationError("assembled upload does not hash to the addressed digest")
        self.registry.blobs.put(data)
        return 200, {"complete": True, "digest": digest, "size_bytes": total}

    def _op_post_version(self, params, query, headers, body, account):
        doc = _json_body(body)
        blob_hash = doc.get("blob_hash")
        if not blob_hash:
            raise MissingField("blob_hash")
        manifest = self.registry.put_model_from_blob(params["name"], blob_hash, doc)
        share = doc.get("provider_share")
        if share is not None:
            num, den = int(share[0]), int(share[1])
            self.ledger.append(Agreement(
                model=manifest.name, designer=manifest.designer_account,
                provider_share_num=num, provider_share_den=den,
                effective_from=len(self.ledger.records)))
        return 200, {"manifest": manifest.to_doc()}

    def _op_list_versions(self, params, query, headers, body, account):
        rows = self.registry.list_versions(params["name"])
        return 200, {
            "name": params["name"],
            "versions": [{"changelog": c, "created_at": t, "version": v} for v, t, c in rows],
        }

    def _op_get_model(self, params, query, headers, body, account):
        version = params["version"]
        version = version if version == "latest" else int(version)
        manifest, blob = self.registry.get_model(params["name"], version)
        return 200, {
            "blob_b64": base64.b64encode(blob).decode("ascii"),
            "manifest": manifest.to_doc(),
        }

    def _op_rollback(self, params, query, headers, body, account):
        doc = _json_body(body)
        if "target_version" not in doc:
            raise MissingField("target_version")
        manifest = self.registry.rollback(params["name"], int(doc["target_version"]))
        return 200, {"manifest": manifest.to_doc()}

    def _op_search(self, params, query, headers, body, account):
        q = query.get("q", "")
        limit = int(query.get("limit", "10"))
        results = self.registry.search_models(q, limit)
        return 200, {"results": [m.to_doc() for m in results]}

    # -- cache ops ---------------------------------------------------------

    def _op_cache_lookup(self, params, query, headers, body, account):
        doc = _json_body(body)
        request = normalize_request(doc.get("request") or {})
        threshold = float(doc.get("threshold", 0.5))
        k = int(doc.get("k", 5))
        now = now_ms()
        output = self.cache.get(request, now)
        similar = self.cache.similar_lookup(request, threshold, k)
        return 200, {
            "hit": output is not None,
            "key": request.key,
            "output_b64": None if output is None else base64.b64encode(output).decode("ascii"),
            "similar": [{"key": key, "similarity": s} for key, s in similar],
        }

    # -- planning ops ---------------------------------------------------------

    def _op_interpret(self, params, query, headers, body, account):
        doc = _json_body(body)
        if "text" not in doc:
            raise MissingField("text")
        lexicon = doc.get("lexicon") or self.config.lexicon
        task = interpret_request(str(doc["text"]), lexicon)
        return 200, {"task": task.to_doc()}

    def _weights_from(self, doc) -> PlannerWeights:
        base = self.config.weights
        w = doc.get("weights") or {}
        return PlannerWeights(
            w_q=float(w.get("w_q", base.w_q)),
            w_c=float(w.get("w_c", base.w_c)),
            w_l=float(w.get("w_l", base.w_l)),
            beam_width=int(doc.get("beam_width", base.beam_width)),
        )

    def _op_plans(self, params, query, headers, body, account):
        doc = _json_body(body)
        if "task" not in doc:
            raise MissingField("task")
        task = TaskSpec.from_doc(doc["task"])
        weights = self._weights_from(doc)
        candidates = doc.get("candidates") or None
        now = now_ms()
        cache_request = normalize_request({
            "model_name": "planner",
            "model_version": 1,
            "prompt": canonical_json({
                "beam": weights.beam_width,
                "candidates": candidates or {},
                "task": task.to_doc(),
                "weights": [weights.w_q, weights.w_c, weights.w_l],
            }),
        })
        cached = self.cache.get(cache_request, now)
        current = self.paths.current(task.task_hash)
        if cached is not None:
            return 200, {
                "breakthrough": None,
                "cached": True,
                "plan": json.loads(cached.decode("utf-8")),
                "record": current.to_doc() if current else None,
            }
        pool = self.registry.pool_snapshot()
        result = plan(task, pool, weights, candidates=candidates)
        plan_doc = result.to_doc()
        self.cache.put(cache_request, canonical_bytes(plan_doc),
                       ttl_ms=self.config.plan_cache_ttl_ms, now=now)
        event = None
        if result.utility.feasible:
            event = self.paths.record_if_best(result, account or "anonymous", now=now)
            if event is not None and self.config.breakthrough_reward_ucr > 0:
                contributions = {str(a): int(v) for a, v in
                                 (doc.get("search_contributions") or {}).items()}
                self.ledger.post_breakthrough(
                    event, self.config.breakthrough_reward_ucr, contributions,
                    funded_by=self.config.treasury_account, now=now)
        current = self.paths.current(task.task_hash)
        return 200, {
            "breakthrough": event.to_doc() if event else None,
            "cached": False,
            "plan": plan_doc,
            "record": current.to_doc() if current else None,
        }

    def _pool_for_plan(self, plan_obj: PathPlan) -> dict:
        pool = {}
        for name, version in set(plan_obj.assignment.values()):
            pool[name] = self.registry.get_manifest(name, version)
        return pool

    def _op_execute(self, params, query, headers, body, account):
        doc = _json_body(body)
        for required in ("task", "plan"):
            if required not in doc:
                raise MissingField(required)
        task = TaskSpec.from_doc(doc["task"])
        plan_obj = PathPlan.from_doc(doc["plan"])
        payload = base64.b64decode(doc.get("input_b64", "") or "")
        probe = doc.get("probe_subtask")
        if probe is None:
            pool = self._pool_for_plan(plan_obj)
            report = execute_plan(plan_obj, task, payload, pool)
            card = score_report(report, task, plan_obj)
            return 200, {"report": report.to_doc(), "scorecard": card.to_doc()}
        return self._responsiveness_probe(task, plan_obj, str(probe), payload)

    def _responsiveness_probe(self, task, plan_obj, failing_sid, payload):
        """Force one subtask's model to fail, refine, re-execute once."""
        if failing_sid not in task.subtasks:
            raise UnknownSubtask(f"subtask {failing_sid} not in task")
        if not plan_obj.utility.feasible:
            raise InfeasiblePlan("probe requires a feasible plan")
        if failing_sid not in plan_obj.assignment:
            raise ValidationError(f"plan does not assign subtask {failing_sid}")
        failing_model = plan_obj.assignment[failing_sid][0]
        forced = frozenset([(failing_sid, failing_model)])
        pool = self._pool_for_plan(plan_obj)
        first = execute_plan(plan_obj, task, payload, pool, forced_failures=forced)
        snapshot = self.registry.pool_snapshot()
        refined = refine_plan(plan_obj, first, task, snapshot, self.config.weights,
                              memories=self.memories, now=now_ms())
        second = execute_plan(refined, task, payload, snapshot, forced_failures=forced)
        responsiveness = 1.0 if second.results[failing_sid].passed else 0.0
        card = with_responsiveness(score_report(second, task, refined), responsiveness)
        return 200, {
            "refined_plan": refined.to_doc(),
            "refined_report": second.to_doc(),
            "report": first.to_doc(),
            "scorecard": card.to_doc(),
        }

    def _op_path_record(self, params, query, headers, body, account):
        record = self.paths.current(params["task_hash"])
        if record is None:
            raise NotFound(f"no record for task {params['task_hash']}")
        return 200, {"record": record.to_doc()}

    # -- ledger & sim ops ----------------------------------------------------

    def _op_revenue(self, params, query, headers, body, account):
        doc = _json_body(body)
        for required in ("model", "amount_ucr"):
            if required not in doc:
                raise MissingField(required)
        window = (int(doc.get("window_from", 0)), doc.get("window_to"))
        record = self.ledger.distribute_revenue(
            str(doc["model"]), int(doc["amount_ucr"]), window=window)
        return 200, {"distribution": record.to_doc()}

    def _op_ledger_records(self, params, query, headers, body, account):
        start = int(query.get("from", "0"))
        records = [r.to_doc() for r in self.ledger.records if r.index >= start]
        return 200, {"records": records}

    def _op_balance(self, params, query, headers, body, account):
        balance = self.ledger.balance(params["account"])
        return 200, {"account": params["account"], "balance_ucr": balance}

    def _op_sim_run(self, params, query, headers, body, account):
        doc = _json_body(body)
        nodes, jobs, max_ticks = parse_sim_config(doc)
        posted: list[int] = []
        try:
            report = run_simulation(nodes, jobs, max_ticks)
            unfinished: list[str] = []
            if doc.get("post_contributions"):
                posted = post_contributions(report, self.ledger)
        except UnfinishedSimulation as exc:
            report = exc.report
            unfinished = list(exc.job_ids)
        return 200, {"posted": posted, "report": report.to_doc(), "unfinished": unfinished}

    # -- housekeeping -----------------------------------------------------------

    def sweep_cache(self) -> int:
        return self.cache.sweep(now_ms())


def _envelope(code: str, message: str, detail=None):
    doc = {"code": code, "message": message}
    if detail is not None:
        doc["detail"] = detail
    return _STATUS_BY_CODE.get(code, 500), doc


def _header(headers, wanted):
    for key, value in headers.items():
        if key.lower() == wanted.lower():
            return value
    return None


def _parse_query(query: str) -> dict[str, str]:
    from urllib.parse import parse_qsl

    return dict(parse_qsl(query, keep_blank_values=True))


def _json_body(body: bytes) -> dict:
    if not body:
        raise ValidationError("request body must be a JSON document")
    doc = json.loads(body.decode("utf-8"))
    if not isinstance(doc, dict):
        raise ValidationError("request body must be a JSON object")
    return doc


_RANGE_RE = re.compile(r"bytes (\d+)-(\d+)/(\d+)$")


def _parse_content_range(value: str) -> tuple[int, int, int]:
    match = _RANGE_RE.match(value.strip())
    if not match:
        raise ValidationError(f"bad Content-Range: {value!r}")
    start, end, total = (int(g) for g in match.groups())
    if not (0 <= start <= end < total):
        raise ValidationError(f"bad Content-Range bounds: {value!r}")
    return start, end, total


def _covered(spans: set[tuple[int, int]], total: int) -> int:
    merged = 0
    last_end = -1
    for start, end in sorted(spans):
        start = max(start, last_end + 1)
        if end > last_end:
            merged += max(0, end - start + 1)
            last_end = end
    return merged


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # silent under test
        if getattr(self.server, "verbose", False):
            super().log_message(format, *args)

    def _run(self, method):
        try:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            status, doc = self.server.gateway.handle(method, self.path,
                                                     dict(self.headers), body)
        except Exception as exc:
            status, doc = 500, {"code": "INTERNAL", "message": f"handler failure: {exc}"}
        payload = canonical_bytes(doc)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header(PROTOCOL_HEADER, str(PROTOCOL_VERSION))
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        try:
            self.wfile.write(payload)
        except BrokenPipeError:
            pass

    def do_GET(self):
        self._run("GET")

    def do_POST(self):
        self._run("POST")

    def do_PUT(self):
        self._run("PUT")


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: GatewayConfig):
        self.gateway = Gateway(config)
        self.verbose = False
        super().__init__((config.host, config.port), _Handler)
        self._sweeper_stop = threading.Event()
        self._sweeper = threading.Thread(target=self._sweep_loop, daemon=True)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def _sweep_loop(self):
        while not self._sweeper_stop.wait(self.gateway.config.sweep_interval_s):
            self.gateway.sweep_cache()

    def start(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        self._sweeper.start()
        return thread

    def stop(self):
        self._sweeper_stop.set()
        self.shutdown()
        self.server_close()


def serve(config: GatewayConfig, block: bool = True) -> GatewayServer:
    server = GatewayServer(config)
    if block:
        server._sweeper.start()
        try:
            server.serve_forever()
        finally:
            server.stop()
    else:
        server.start()
    return server
