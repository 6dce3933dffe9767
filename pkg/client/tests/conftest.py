import pathlib
import subprocess
import sys
import time

import pytest

EXAMPLES = pathlib.Path(__file__).resolve().parent.parent / "examples"
sys.path.insert(0, str(EXAMPLES))


class ServedInstance:
    """A `seqware serve` subprocess bound to an ephemeral port."""

    def __init__(self, trace_dir):
        self.trace_dir = trace_dir
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "seqware.cli", "serve", "--port", "0",
             "--trace-dir", str(trace_dir)],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
        )
        self.port = None
        deadline = time.monotonic() + 15
        while time.monotonic() < deadline:
            line = self.proc.stdout.readline()
            if line.startswith("seqware service: discovery on"):
                self.port = int(line.rsplit(":", 1)[1])
                break
        if self.port is None:
            self.proc.kill()
            raise RuntimeError("service never announced its discovery port")

    def stop(self):
        self.proc.terminate()
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()


@pytest.fixture()
def served(tmp_path):
    instance = ServedInstance(tmp_path / "shots")
    yield instance
    instance.stop()
