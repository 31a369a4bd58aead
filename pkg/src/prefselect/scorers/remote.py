"""Remote scoring backend.

Speaks a minimal vendor-neutral protocol: POST {"prompt", "response"} to a
per-role endpoint, which answers {"logprobs": [float, ...]} for the
response tokens under that endpoint's own tokenization.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import requests

from ..errors import SourceError
from .base import TextScorer


class RemoteScorer(TextScorer):
    def __init__(self, policy_url: str, reference_url: str, timeout: float = 30.0):
        super().__init__()
        self.urls = {"policy": policy_url, "reference": reference_url}
        self.timeout = timeout
        self._session = requests.Session()

    def _score_text(self, prompt: str, response: str, model_role: str) -> Sequence[float]:
        url = self.urls[model_role]
        try:
            resp = self._session.post(
                url, json={"prompt": prompt, "response": response}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise SourceError(f"scoring endpoint {url} unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise SourceError(f"scoring endpoint {url} returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise SourceError(f"scoring endpoint {url} returned non-JSON body") from exc
        values = payload.get("logprobs") if isinstance(payload, dict) else None
        if not isinstance(values, list):
            raise SourceError(f"scoring endpoint {url} response missing 'logprobs' array")
        return values

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(b"remote\x00")
        h.update(self.urls["policy"].encode("utf-8"))
        h.update(b"\x00")
        h.update(self.urls["reference"].encode("utf-8"))
        return h.hexdigest()

    def close(self) -> None:
        self._session.close()
