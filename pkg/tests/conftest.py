import socket
import threading

import numpy as np
import pytest

from dcsolver import GaussianMixtureModel, VPLinearSchedule, VersionMismatch, ProtocolError, convert
from dcsolver.remote import (
    STATUS_DIMENSION,
    STATUS_EVAL,
    STATUS_MALFORMED,
    STATUS_VERSION,
    decode_request,
    encode_error,
    encode_response,
)

FROM_WIRE = {"eps": "noise_pred", "x0": "data_pred", "v": "v_pred"}


class StubServer(threading.Thread):
    """In-process denoiser endpoint used to exercise the client paths.

    cond=999 triggers a truncated response to simulate a dying peer.
    """

    def __init__(self, model):
        super().__init__(daemon=True)
        self.model = model
        self.sock = socket.socket()
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(4)
        self.sock.settimeout(0.2)
        self.port = self.sock.getsockname()[1]
        self.endpoint = f"127.0.0.1:{self.port}"
        self._stopping = threading.Event()

    def run(self):
        while not self._stopping.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()
        self.sock.close()

    def stop(self):
        self._stopping.set()
        self.join()

    def _serve(self, conn):
        def read_exactly(n):
            chunks = b""
            while len(chunks) < n:
                chunk = conn.recv(n - len(chunks))
                if not chunk:
                    raise EOFError
                chunks += chunk
            return chunks

        with conn:
            while True:
                try:
                    header, x32 = decode_request(read_exactly)
                except EOFError:
                    return
                except VersionMismatch as e:
                    conn.sendall(encode_error(STATUS_VERSION, str(e)))
                    return  # framing is lost
                except ProtocolError as e:
                    conn.sendall(encode_error(STATUS_MALFORMED, str(e)))
                    continue
                if header["dim"] != self.model.dim:
                    conn.sendall(encode_error(STATUS_DIMENSION, f"endpoint serves dim {self.model.dim}"))
                    continue
                if header.get("cond") == 999:
                    good = encode_response("noise_pred", x32)
                    conn.sendall(good[: len(good) // 2])
                    return
                try:
                    x = np.asarray(x32, dtype=np.float64)
                    out = self.model.evaluate(x, header["t"], header.get("cond"))
                    out = convert(out, x, self.model.schedule, FROM_WIRE[header["param"]])
                except Exception as e:
                    conn.sendall(encode_error(STATUS_EVAL, str(e)))
                    continue
                conn.sendall(encode_response(out.param, out.value))


@pytest.fixture(scope="session")
def server():
    sched = VPLinearSchedule()
    model = GaussianMixtureModel(sched, np.array([[-1.0], [1.5]]), np.array([0.4, 0.6]), 0.3)
    srv = StubServer(model)
    srv.start()
    yield srv
    srv.stop()
