import http.server
import json
import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from embeval.embeddings import (
    EmbeddingMatrix,
    EmbeddingRecord,
    LayerStack,
    PowerMeans,
    PrecomputedStore,
    RemoteClient,
    Sentence,
    SingleLayer,
    StaticTable,
    embed,
    embed_sentence,
    normalize_rows,
    power_mean_aggregate,
    select_layer,
    write_records,
    write_static_table,
)
from embeval.errors import (
    DimensionMismatchError,
    InadmissibleExponentError,
    LayerOutOfRangeError,
    MissingSentenceError,
    ProviderUnavailableError,
    ZeroVectorError,
)
from embeval.tokenizer import TokenSequence


def toks(*pieces):
    return TokenSequence(tuple(pieces), tuple(range(len(pieces))),
                         tuple(p.startswith("##") for p in pieces))


def test_normalize_345():
    out = normalize_rows(EmbeddingMatrix(np.array([[3.0, 4.0]])))
    assert np.allclose(out.values, [[0.6, 0.8]])
    assert out.normalized


def test_normalize_idempotent():
    m = normalize_rows(EmbeddingMatrix(np.array([[1.0, 2.0, 2.0], [0.1, 0.0, 0.0]])))
    again = normalize_rows(m)
    assert np.max(np.abs(again.values - m.values)) < 1e-12


def test_normalize_preserves_direction():
    raw = np.array([[2.5, -1.0, 0.5]])
    out = normalize_rows(EmbeddingMatrix(raw))
    cos = float((out.values @ raw.T).item()) / np.linalg.norm(raw)
    assert abs(cos - 1.0) < 1e-12


def test_normalize_zero_row():
    with pytest.raises(ZeroVectorError):
        normalize_rows(EmbeddingMatrix(np.array([[0.0, 0.0]])))


def _stack(*matrices):
    return LayerStack([EmbeddingMatrix(np.asarray(m, dtype=float)) for m in matrices])


def test_select_layer():
    stack = _stack([[1.0, 0.0]], [[0.0, 1.0]], [[1.0, 1.0]])
    assert np.allclose(select_layer(stack, 0).values, [[1.0, 0.0]])
    assert np.allclose(select_layer(stack, 2).values, [[1.0, 1.0]])
    with pytest.raises(LayerOutOfRangeError):
        select_layer(stack, 7)
    with pytest.raises(LayerOutOfRangeError):
        select_layer(stack, -1)


def test_power_mean_of_identical_layers_is_identity():
    layer = [[0.6, 0.8], [1.0, 0.0]]
    out = power_mean_aggregate(_stack(layer, layer), [1])
    assert np.max(np.abs(out.values - np.asarray(layer))) < 1e-12


def test_power_mean_plus_infinity():
    out = power_mean_aggregate(_stack([[1.0, 0.0]], [[0.0, 1.0]]), [math.inf])
    assert np.allclose(out.values, [[1 / math.sqrt(2), 1 / math.sqrt(2)]])


def test_power_mean_minus_infinity_is_elementwise_min():
    stack = _stack([[0.6, 0.8]], [[0.8, 0.6]])
    out = power_mean_aggregate(stack, [-math.inf])
    pre = np.array([0.6, 0.6])
    assert np.allclose(out.values, pre / np.linalg.norm(pre))


def test_power_mean_rejects_bad_exponents():
    stack = _stack([[1.0, 0.0]], [[0.0, 1.0]])
    for p in (2, 0.5, -3, 0):
        with pytest.raises(InadmissibleExponentError):
            power_mean_aggregate(stack, [p])
    with pytest.raises(InadmissibleExponentError):
        power_mean_aggregate(stack, [])


def test_power_mean_odd_exponent_matches_enumeration():
    a = np.array([[0.6, -0.8]])
    b = np.array([[-0.8, 0.6]])
    out = power_mean_aggregate(_stack(a, b), [3])
    cube_mean = (a ** 3 + b ** 3) / 2
    expected = np.sign(cube_mean) * np.abs(cube_mean) ** (1 / 3)
    expected /= np.linalg.norm(expected)
    assert np.max(np.abs(out.values - expected)) < 1e-12


def test_power_mean_concatenates_blocks():
    out = power_mean_aggregate(_stack([[1.0, 0.0]], [[0.0, 1.0]]), [1, math.inf])
    assert out.values.shape == (1, 4)
    assert abs(np.linalg.norm(out.values) - 1.0) < 1e-12


def test_static_lookup():
    table = StaticTable({"cat": [1.0, 0.0]})
    out = embed(toks("cat"), table)
    assert out.values.shape == (1, 2)
    assert np.allclose(out.values, [[1.0, 0.0]])


def test_static_dedicated_unknown_vector():
    table = StaticTable({"cat": [1.0, 0.0]}, unknown_vector=[0.0, 2.0])
    out = embed(toks("xyz"), table)
    assert np.allclose(out.values, [[0.0, 1.0]])


def test_static_hash_fallback_is_deterministic_and_unit():
    table = StaticTable({"cat": np.ones(16)})
    v1 = table.vector("zebra")
    v2 = table.vector("zebra")
    v3 = StaticTable({"dog": np.ones(16)}).vector("zebra")
    assert np.array_equal(v1, v2)
    assert np.array_equal(v1, v3)  # depends only on the piece string
    assert abs(np.linalg.norm(v1) - 1.0) < 1e-12
    assert not np.array_equal(v1, table.vector("horse"))


def test_static_dim_mismatch():
    with pytest.raises(DimensionMismatchError):
        StaticTable({"a": [1.0, 0.0], "b": [1.0, 0.0, 0.0]})


def _record(rid, pieces, layers):
    return EmbeddingRecord(rid, toks(*pieces), _stack(*layers))


def test_precomputed_roundtrip(tmp_path):
    rec = _record("s1", ("cat", "sat"), [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [2.0, 0.0]]])
    path = tmp_path / "records.jsonl"
    write_records(path, [rec])
    store = PrecomputedStore.from_file(path)
    tokens, matrix = embed_sentence(Sentence(id="s1"), store, SingleLayer(1))
    assert list(tokens.pieces) == ["cat", "sat"]
    assert np.allclose(matrix.values[1], [1.0, 0.0])
    with pytest.raises(MissingSentenceError):
        embed(None, store, sentence_id="nope")


def test_precomputed_token_mismatch():
    store = PrecomputedStore([_record("s1", ("cat",), [[[1.0, 0.0]]])])
    with pytest.raises(DimensionMismatchError):
        embed_sentence(Sentence(id="s1", tokens=toks("dog")), store)


def test_precomputed_duplicate_ids():
    rec = _record("s1", ("cat",), [[[1.0, 0.0]]])
    with pytest.raises(ValueError):
        PrecomputedStore([rec, rec])


def test_record_shape_invariant():
    with pytest.raises(DimensionMismatchError):
        _record("s1", ("cat", "sat"), [[[1.0, 0.0]]])


def test_static_table_file_roundtrip(tmp_path):
    path = tmp_path / "table.jsonl"
    write_static_table(path, {"cat": [1.0, 0.0], "[UNK]": [0.0, 1.0]})
    table = StaticTable.from_file(path)
    assert np.allclose(table.vector("cat"), [1.0, 0.0])
    # the [UNK] row doubles as the dedicated unknown vector
    assert np.allclose(table.vector("anything"), [0.0, 1.0])


@given(st.lists(st.sampled_from(["cat", "dog", "sat", "zebra", "qqq"]),
                min_size=1, max_size=6))
@settings(max_examples=50)
def test_embed_shape_and_norms(pieces):
    table = StaticTable({"cat": [1.0, 0.0, 0.0], "dog": [0.0, 1.0, 0.0],
                         "sat": [1.0, 1.0, 0.0]})
    out = embed(toks(*pieces), table)
    assert out.values.shape == (len(pieces), 3)
    assert np.max(np.abs(np.linalg.norm(out.values, axis=1) - 1.0)) < 1e-9


# ---------------------------------------------------------- remote provider

class _Handler(http.server.BaseHTTPRequestHandler):
    behavior = "ok"
    fail_next = 0

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        cls = type(self)
        if cls.fail_next > 0:
            cls.fail_next -= 1
            self.send_response(503)
            self.end_headers()
            return
        if cls.behavior == "malformed":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"this is not json\n")
            return
        if cls.behavior == "empty":
            self.send_response(200)
            self.end_headers()
            return
        lines = []
        for sent in payload["sentences"]:
            pieces = sent["text"].split()
            layers = [[[1.0 if (i + layer) % 2 == 0 else 0.0, 1.0]
                       for i in range(len(pieces))]
                      for layer in payload["layers"]]
            lines.append(json.dumps({"id": sent["id"], "tokens": pieces, "layers": layers}))
        body = ("\n".join(lines) + "\n").encode()
        self.send_response(200)
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def remote_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.behavior = "ok"
    _Handler.fail_next = 0
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()


def test_remote_happy_path(remote_server):
    client = RemoteClient(remote_server, layers=[0, 1], backoff=0.01)
    tokens, matrix = embed_sentence(Sentence(id="r1", text="cat sat"), client, SingleLayer(1))
    assert list(tokens.pieces) == ["cat", "sat"]
    assert matrix.values.shape == (2, 2)


def test_remote_retries_then_succeeds(remote_server):
    _Handler.fail_next = 2
    client = RemoteClient(remote_server, backoff=0.01)
    rec = client.fetch("r1", "cat")
    assert rec.id == "r1"


def test_remote_gives_up_after_retries(remote_server):
    _Handler.fail_next = 3
    client = RemoteClient(remote_server, backoff=0.01)
    with pytest.raises(ProviderUnavailableError):
        client.fetch("r1", "cat")


def test_remote_malformed_response(remote_server):
    _Handler.behavior = "malformed"
    client = RemoteClient(remote_server, backoff=0.01)
    with pytest.raises(ProviderUnavailableError):
        client.fetch("r1", "cat")


def test_remote_unknown_id(remote_server):
    _Handler.behavior = "empty"
    client = RemoteClient(remote_server, backoff=0.01)
    with pytest.raises(MissingSentenceError):
        client.fetch("r1", "cat")
