"""Python access to the CHOIR core."""

import json

from ._choir import (
    ChoirError,
    decode_context,
    embed,
    encode_context,
    segment_document,
    tokenize,
)
from . import _choir


def diff(base, proposed):
    return json.loads(_choir.diff(base, proposed))


class Service:
    """Gateway service core. JSON arguments and results are plain dicts."""

    def __init__(self, config_text, base_dir=""):
        self._svc = _choir.Service(config_text, str(base_dir))

    def ingest(self, event):
        status, body = self._svc.ingest(json.dumps(event))
        return status, json.loads(body)

    def sweep(self, now):
        return json.loads(self._svc.sweep(now))

    def actions_since(self, since=0):
        return json.loads(self._svc.actions_since(since))

    @property
    def last_seq(self):
        return self._svc.last_seq()

    def documents(self):
        return json.loads(self._svc.documents())

    def document(self, path, revision=None):
        return json.loads(self._svc.document(path, revision))

    def history(self, path):
        return json.loads(self._svc.history(path))

    def flow(self, flow_id):
        raw = self._svc.flow(flow_id)
        return None if raw is None else json.loads(raw)

    def health(self):
        return json.loads(self._svc.health())


__all__ = [
    "ChoirError",
    "Service",
    "decode_context",
    "diff",
    "embed",
    "encode_context",
    "segment_document",
    "tokenize",
]
