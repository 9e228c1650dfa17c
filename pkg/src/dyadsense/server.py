"""Streaming service: one connection is one session.

The connection handler is the session's only worker; it parses lines, feeds
the engine and sends state/feedback messages back. Log records go through a
queue to a writer thread so slow disks never stall ingestion. If the queue
fills up, the oldest buffered raw samples are dropped (and counted); computed
records are never dropped.
"""

from __future__ import annotations

import asyncio
import logging
import os
import threading
from collections import deque
from pathlib import Path
from typing import Iterable, Mapping

from .config import ConfigError, EngineConfig
from .engine import Engine
from .forecast.gbt import GbtEnsemble
from .records import RAW_KINDS
from .session import SessionWriter
from .wire import Hello, WireError, decode, encode, error_message, outbound_for, to_wire

log = logging.getLogger(__name__)


class BackgroundLogWriter:
    """Hand records to a :class:`SessionWriter` on a separate thread."""

    def __init__(self, path: str | os.PathLike, max_buffered_raw: int = 200_000):
        self._writer = SessionWriter(path)
        self._queue: deque[dict] = deque()
        self._raw = 0
        self._max_raw = max_buffered_raw
        self._cv = threading.Condition()
        self._closing = False
        self.dropped = 0
        self._thread = threading.Thread(target=self._run, name="session-log-writer", daemon=True)
        self._thread.start()

    def put(self, record: dict) -> None:
        with self._cv:
            self._queue.append(record)
            if record["kind"] in RAW_KINDS:
                self._raw += 1
                if self._raw > self._max_raw:
                    self._drop_oldest_raw()
            self._cv.notify()

    def _drop_oldest_raw(self) -> None:
        for i, rec in enumerate(self._queue):
            if rec["kind"] in RAW_KINDS:
                del self._queue[i]
                self._raw -= 1
                self.dropped += 1
                if self.dropped == 1 or self.dropped % 1000 == 0:
                    log.warning("log writer behind; dropped %d raw records so far", self.dropped)
                return

    def _run(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._closing:
                    self._cv.wait()
                if not self._queue and self._closing:
                    break
                batch = list(self._queue)
                self._queue.clear()
                self._raw = 0
            for rec in batch:
                self._writer.write(rec)

    def close(self) -> None:
        with self._cv:
            self._closing = True
            self._cv.notify()
        self._thread.join()
        self._writer.close()
        if self.dropped:
            log.warning("session log is missing %d raw records dropped under load", self.dropped)


class DyadServer:
    def __init__(
        self,
        config: EngineConfig | None = None,
        models: Mapping[str, GbtEnsemble] | None = None,
        out_dir: str | os.PathLike = ".",
    ):
        self.config = config or EngineConfig.from_flat()
        self.models = models
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._server: asyncio.AbstractServer | None = None
        self.sessions_done: list[Path] = []

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        self._server = await asyncio.start_server(self._handle, host, port, limit=1 << 20)
        addr = self._server.sockets[0].getsockname()
        log.info("listening on %s:%d", addr[0], addr[1])
        return addr[0], addr[1]

    async def serve_forever(self) -> None:
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def _session_config(self, hello: Hello) -> EngineConfig:
        if not hello.config:
            return self.config
        return EngineConfig.from_flat({**self.config.to_flat(), **hello.config})

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        engine: Engine | None = None
        logw: BackgroundLogWriter | None = None
        session_id: str | None = None
        out: list[dict] = []

        def send(msg: dict) -> None:
            writer.write(encode(msg))

        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if not line.strip():
                    continue
                try:
                    msg = decode(line, int(self.config["signals.col_bands"]))
                except WireError as exc:
                    send(error_message(str(exc), 0, session_id))
                    continue
                if isinstance(msg, Hello):
                    if engine is not None:
                        send(error_message("session already started on this connection", msg.t, session_id))
                        continue
                    try:
                        cfg = self._session_config(msg)
                    except ConfigError as exc:
                        send(error_message(str(exc), msg.t, msg.session_id))
                        continue
                    session_id = msg.session_id
                    path = self.out_dir / f"{session_id}.jsonl"
                    logw = BackgroundLogWriter(path, int(cfg["app.max_buffered_raw"]))
                    engine = Engine(cfg, self.models, out.append, session_id)
                elif engine is None:
                    send(error_message("expected a hello message first", msg.t))
                    continue
                else:
                    engine.feed(msg)
                self._drain(out, logw, session_id, send)
                await writer.drain()
            if engine is not None:
                engine.close()
                self._drain(out, logw, session_id, send)
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError) as exc:
            log.warning("connection for session %s lost: %s", session_id, exc)
            if engine is not None:
                engine.close()
                self._drain(out, logw, session_id, lambda m: None)
        finally:
            if logw is not None:
                await asyncio.to_thread(logw.close)
                self.sessions_done.append(self.out_dir / f"{session_id}.jsonl")
            writer.close()

    @staticmethod
    def _drain(out: list[dict], logw: BackgroundLogWriter | None, session_id, send) -> None:
        for rec in out:
            if logw is not None:
                logw.put(rec)
            msg = outbound_for(rec, session_id)
            if msg is not None:
                send(msg)
        out.clear()


async def send_session(
    host: str,
    port: int,
    items: Iterable,
    session_id: str,
    config: Mapping | None = None,
    batch: int = 512,
) -> list[dict]:
    """Client side: stream ``items`` to a server, return every message received."""
    import json

    reader, writer = await asyncio.open_connection(host, port, limit=1 << 20)
    received: list[dict] = []

    async def pump():
        while True:
            line = await reader.readline()
            if not line:
                return
            received.append(json.loads(line))

    task = asyncio.create_task(pump())
    writer.write(encode(to_wire(Hello(session_id, ("A", "B"), dict(config or {})), session_id)))
    buf = []
    for item in items:
        buf.append(encode(to_wire(item, session_id)))
        if len(buf) >= batch:
            writer.write(b"".join(buf))
            buf.clear()
            await writer.drain()
    writer.write(b"".join(buf))
    await writer.drain()
    writer.write_eof()
    await task
    writer.close()
    return received
