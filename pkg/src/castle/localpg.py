"""Throwaway PostgreSQL cluster on a private unix socket.

Used by tests and the offline bench scripts. Binaries come from
``CASTLE_PG_BIN``, the ``pgserver`` wheel, or ``PATH``. When running as root
the server is started under an unprivileged uid because postgres refuses root.
"""

from __future__ import annotations

import os
import pwd
import shutil
import subprocess
import tempfile
from pathlib import Path

from castle.errors import ConfigError

PORT = 5432


def find_bindir() -> Path:
    env = os.environ.get("CASTLE_PG_BIN")
    if env:
        return Path(env)
    try:
        import pgserver  # noqa: F401  (binary wheel, optional)
        candidate = Path(pgserver.__file__).parent / "pginstall" / "bin"
        if (candidate / "initdb").exists():
            return candidate
    except ImportError:
        pass
    found = shutil.which("initdb")
    if found:
        return Path(found).parent
    raise ConfigError("no PostgreSQL binaries found; set CASTLE_PG_BIN or install pgserver")


def _service_account() -> tuple | None:
    if os.geteuid() != 0:
        return None
    uid = os.environ.get("CASTLE_PG_UID")
    if uid:
        entry = pwd.getpwuid(int(uid))
        return entry.pw_uid, entry.pw_gid
    for name in ("postgres", "sandboxing-p2r-user", "nobody"):
        try:
            entry = pwd.getpwnam(name)
            return entry.pw_uid, entry.pw_gid
        except KeyError:
            continue
    raise ConfigError("running as root and no unprivileged account is available for postgres")


class LocalCluster:
    def __init__(self, root: str | Path | None = None):
        self.bindir = find_bindir()
        self.root = Path(root) if root else Path(tempfile.mkdtemp(prefix="castle-pg-"))
        self._owns_root = root is None
        self.data = self.root / "data"
        self.sock = self.root / "sock"
        self.account = _service_account()
        self.running = False

    def _run(self, *args: str) -> None:
        cmd = [str(self.bindir / args[0]), *args[1:]]
        if self.account:
            uid, gid = self.account
            cmd = ["setpriv", f"--reuid={uid}", f"--regid={gid}", "--clear-groups", *cmd]
        proc = subprocess.run(cmd, capture_output=True, text=True, cwd=self.root)
        if proc.returncode != 0:
            log = self.root / "server.log"
            extra = log.read_text() if log.exists() else ""
            raise ConfigError(f"{args[0]} failed: {proc.stderr.strip()} {extra[-2000:]}")

    @property
    def dsn(self) -> str:
        return f"host={self.sock} port={PORT} user=postgres dbname=postgres"

    def start(self) -> str:
        self.sock.mkdir(parents=True, exist_ok=True)
        if self.account:
            uid, gid = self.account
            os.chmod(self.root, 0o755)
            for p in (self.root, self.sock):
                os.chown(p, uid, gid)
        if not self.data.exists():
            self._run("initdb", "-D", str(self.data), "-U", "postgres", "-A", "trust", "-E", "UTF8",
                      "--locale=C", "--no-sync")
        opts = (f"-k {self.sock} -c listen_addresses='' -p {PORT} -c fsync=off "
                f"-c synchronous_commit=off -c full_page_writes=off")
        self._run("pg_ctl", "-D", str(self.data), "-o", opts, "-l", str(self.root / "server.log"),
                  "-w", "start")
        self.running = True
        return self.dsn

    def stop(self) -> None:
        if self.running:
            try:
                self._run("pg_ctl", "-D", str(self.data), "-m", "immediate", "-w", "stop")
            finally:
                self.running = False
        if self._owns_root:
            shutil.rmtree(self.root, ignore_errors=True)

    def __enter__(self) -> "LocalCluster":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
