import threading

import pytest

from embed_service import CodeVectorModel, make_server


@pytest.fixture(scope="session")
def model():
    return CodeVectorModel()


@pytest.fixture(scope="session")
def live_server(model):
    server = make_server(model=model, batch_cap=64)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


@pytest.fixture()
def loading_server():
    server = make_server(model=None, batch_cap=64)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
