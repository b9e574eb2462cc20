"""Thin stdlib HTTP client for the gateway; the CLI is built on it."""

from __future__ import annotations

import base64
import json
import urllib.error
import urllib.parse
import urllib.request

from .canon import canonical_bytes, sha256_hex
from .errors import GatewayError
from .gateway import PROTOCOL_HEADER, PROTOCOL_VERSION
from .registry import CHUNK_SIZE


class GatewayClient:
    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def _request(self, method: str, path: str, doc=None, raw: bytes | None = None,
                 headers: dict | None = None) -> dict:
        body = raw if raw is not None else (canonical_bytes(doc) if doc is not None else None)
        request = urllib.request.Request(self.base_url + path, data=body, method=method)
        request.add_header(PROTOCOL_HEADER, str(PROTOCOL_VERSION))
        if doc is not None:
            request.add_header("Content-Type", "application/json; charset=utf-8")
        if self.token:
            request.add_header("Authorization", f"Bearer {self.token}")
        for key, value in (headers or {}).items():
            request.add_header(key, value)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                return json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            payload = exc.read().decode("utf-8", errors="replace")
            try:
                envelope = json.loads(payload)
            except json.JSONDecodeError:
                envelope = {"code": "INTERNAL", "message": payload}
            raise GatewayError(envelope.get("code", "INTERNAL"),
                               envelope.get("message", ""),
                               detail=envelope.get("detail"),
                               status=exc.code) from None
        except urllib.error.URLError as exc:
            raise GatewayError("INTERNAL", f"gateway unreachable: {exc.reason}") from None

    # -- registry ---------------------------------------------------------

    def put_blob(self, data: bytes, chunked: bool = True) -> str:
        digest = sha256_hex(data)
        if not chunked or len(data) <= CHUNK_SIZE:
            self._request("PUT", f"/v1/blobs/{digest}", raw=data)
            return digest
        total = len(data)
        for start in range(0, total, CHUNK_SIZE):
            end = min(start + CHUNK_SIZE, total) - 1
            self._request("PUT", f"/v1/blobs/{digest}", raw=data[start:end + 1],
                          headers={"Content-Range": f"bytes {start}-{end}/{total}"})
        return digest

    def post_version(self, name: str, meta: dict) -> dict:
        return self._request("POST", f"/v1/models/{name}/versions", doc=meta)["manifest"]

    def push(self, name: str, blob: bytes, meta: dict) -> dict:
        meta = dict(meta)
        meta["blob_hash"] = self.put_blob(blob)
        return self.post_version(name, meta)

    def list_versions(self, name: str) -> dict:
        return self._request("GET", f"/v1/models/{name}/versions")

    def get_model(self, name: str, version: int | str = "latest") -> tuple[dict, bytes]:
        doc = self._request("GET", f"/v1/models/{name}/versions/{version}")
        return doc["manifest"], base64.b64decode(doc["blob_b64"])

    def rollback(self, name: str, target_version: int) -> dict:
        doc = self._request("POST", f"/v1/models/{name}/rollback",
                            doc={"target_version": target_version})
        return doc["manifest"]

    def search(self, query: str, limit: int = 10) -> list[dict]:
        qs = urllib.parse.urlencode({"q": query, "limit": limit})
        return self._request("GET", f"/v1/models?{qs}")["results"]

    # -- cache / planning ----------------------------------------------------

    def cache_lookup(self, request_doc: dict, threshold: float = 0.5, k: int = 5) -> dict:
        return self._request("POST", "/v1/cache/lookup",
                             doc={"k": k, "request": request_doc, "threshold": threshold})

    def interpret(self, text: str, lexicon: dict | None = None) -> dict:
        doc = {"text": text}
        if lexicon:
            doc["lexicon"] = lexicon
        return self._request("POST", "/v1/interpret", doc=doc)["task"]

    def plan(self, task_doc: dict, weights: dict | None = None,
             beam_width: int | None = None, candidates: dict | None = None,
             search_contributions: dict | None = None) -> dict:
        doc = {"task": task_doc}
        if weights:
            doc["weights"] = weights
        if beam_width is not None:
            doc["beam_width"] = beam_width
        if candidates:
            doc["candidates"] = candidates
        if search_contributions:
            doc["search_contributions"] = search_contributions
        return self._request("POST", "/v1/plans", doc=doc)

    def execute(self, task_doc: dict, plan_doc: dict, payload: bytes = b"",
                probe_subtask: str | None = None) -> dict:
        doc = {
            "input_b64": base64.b64encode(payload).decode("ascii"),
            "plan": plan_doc,
            "task": task_doc,
        }
        if probe_subtask is not None:
            doc["probe_subtask"] = probe_subtask
        return self._request("POST", "/v1/execute", doc=doc)

    def path_record(self, task_hash: str) -> dict:
        return self._request("GET", f"/v1/paths/records/{task_hash}")["record"]

    # -- ledger / sim ----------------------------------------------------------

    def post_revenue(self, model: str, amount_ucr: int,
                     window_from: int = 0, window_to: int | None = None) -> dict:
        doc = {"amount_ucr": amount_ucr, "model": model, "window_from": window_from}
        if window_to is not None:
            doc["window_to"] = window_to
        return self._request("POST", "/v1/ledger/revenue", doc=doc)["distribution"]

    def ledger_records(self, start: int = 0) -> list[dict]:
        return self._request("GET", f"/v1/ledger/records?from={start}")["records"]

    def balance(self, account: str) -> int:
        return self._request("GET", f"/v1/ledger/accounts/{account}/balance")["balance_ucr"]

    def sim_run(self, config_doc: dict, post: bool = False) -> dict:
        doc = dict(config_doc)
        if post:
            doc["post_contributions"] = True
        return self._request("POST", "/v1/sim/run", doc=doc)

    def healthz(self) -> dict:
        return self._request("GET", "/v1/healthz")
