import json

import numpy as np
import pytest

from coupledgnn import cascades, configs, fileio, metrics, model, train
from coupledgnn.common import SchemaError, git_blob_hash
from conftest import make_cascade, make_graph


@pytest.fixture
def named_graph():
    return make_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)], node_ids=['alice', 'bob', 'carol', 'dave'])


def test_graph_round_trip(tmp_path, named_graph):
    path = tmp_path / 'g.tsv'
    fileio.write_graph(path, named_graph)
    assert fileio.id_map_path(path) == str(tmp_path / 'g.ids.tsv')
    g = fileio.read_graph(path)
    assert g.node_ids == named_graph.node_ids
    np.testing.assert_array_equal(g.edges(), named_graph.edges())


def test_graph_round_trip_keeps_ids_verbatim(tmp_path):
    g = make_graph(3, [(0, 1), (1, 2), (2, 0)], node_ids=['#tag', 'a"b', 'plain'])
    path = tmp_path / 'g.tsv'
    fileio.write_graph(path, g)
    assert path.read_text() == '#tag\ta"b\na"b\tplain\nplain\t#tag\n'
    back = fileio.read_graph(path)
    assert back.node_ids == ('#tag', 'a"b', 'plain')
    np.testing.assert_array_equal(back.edges(), g.edges())


def test_graph_ids_with_tabs_are_rejected(tmp_path):
    g = make_graph(2, [(0, 1)], node_ids=['a\tb', 'c'])
    with pytest.raises(SchemaError):
        fileio.write_graph(tmp_path / 'g.tsv', g)


def test_graph_without_id_map_uses_first_appearance(tmp_path):
    path = tmp_path / 'g.tsv'
    path.write_text('# comment\nz\ty\ny\tx\n')
    g = fileio.read_graph(path, write_id_map=True)
    assert g.node_ids == ('z', 'y', 'x')
    assert (tmp_path / 'g.ids.tsv').read_text() == 'z\t0\ny\t1\nx\t2\n'


@pytest.mark.parametrize('text', ['a\tb\tc\n', 'a\t\n', 'a\n'])
def test_malformed_edge_lists(tmp_path, text):
    path = tmp_path / 'g.tsv'
    path.write_text(text)
    with pytest.raises(SchemaError):
        fileio.read_graph(path)


def test_id_map_with_gaps(tmp_path):
    (tmp_path / 'g.tsv').write_text('a\tb\n')
    (tmp_path / 'g.ids.tsv').write_text('a\t0\nb\t2\n')
    with pytest.raises(SchemaError):
        fileio.read_graph(tmp_path / 'g.tsv')


def test_matrix_round_trip(tmp_path):
    values = np.arange(12, dtype=float).reshape(4, 3) / 7
    fileio.write_matrix(tmp_path / 'm.bin', values)
    data = (tmp_path / 'm.bin').read_bytes()
    assert data[:8] == b'\x04\x00\x00\x00\x03\x00\x00\x00'
    np.testing.assert_array_equal(fileio.read_matrix(tmp_path / 'm.bin'), values)


def test_truncated_matrix(tmp_path):
    fileio.write_matrix(tmp_path / 'm.bin', np.ones((2, 2)))
    (tmp_path / 'm.bin').write_bytes((tmp_path / 'm.bin').read_bytes()[:-1])
    with pytest.raises(SchemaError):
        fileio.read_matrix(tmp_path / 'm.bin')


def test_cascade_round_trip(tmp_path, named_graph):
    items = [make_cascade('x', [(0, 0), (1, 1), (2, 2)]), make_cascade('y', [(3, 0), (2, 0)])]
    fileio.write_cascades(tmp_path / 'c.jsonl', items, named_graph)
    first = json.loads((tmp_path / 'c.jsonl').read_text().splitlines()[0])
    assert first['observed'] == ['alice']
    assert first['final'] == ['alice', 'bob', 'carol']
    back = fileio.read_cascades(tmp_path / 'c.jsonl', named_graph)
    assert [c.id for c in back] == ['x', 'y']
    assert [c.activations for c in back] == [c.activations for c in items]
    assert back[1].observed_active == frozenset([2, 3])


def test_cascade_file_errors(tmp_path, named_graph):
    path = tmp_path / 'c.jsonl'
    path.write_text('{"id": "x", "activations": [["alice", 0]], "observed": ["alice"], "final": ["alice"]}\n{oops\n')
    with pytest.raises(SchemaError) as info:
        fileio.read_cascades(path, named_graph)
    assert info.value.line == 2

    path.write_text('{"id": "x", "activations": [["erin", 0]], "observed": ["erin"], "final": ["erin"]}\n')
    with pytest.raises(SchemaError):
        fileio.read_cascades(path, named_graph)

    path.write_text('{"id": "x", "activations": [["alice", 0]], "observed": [], "final": ["alice"]}\n')
    with pytest.raises(SchemaError):
        fileio.read_cascades(path, named_graph)


def test_raw_records_need_id_and_activations(tmp_path):
    path = tmp_path / 'r.jsonl'
    path.write_text('{"id": "x", "activations": []}\n\n{"id": "y"}\n')
    with pytest.raises(SchemaError) as info:
        fileio.read_cascade_records(path)
    assert info.value.line == 3


def test_split_round_trip(tmp_path):
    split = {'a': 'train', 'b': 'val', 'c': 'test'}
    fileio.write_split(tmp_path / 's.tsv', split)
    assert fileio.read_split(tmp_path / 's.tsv') == split


def test_split_errors(tmp_path):
    path = tmp_path / 's.tsv'
    path.write_text('a\ttrain\nb\tholdout\n')
    with pytest.raises(SchemaError) as info:
        fileio.read_split(path)
    assert info.value.line == 2
    path.write_text('a\ttrain\na\tval\n')
    with pytest.raises(SchemaError):
        fileio.read_split(path)


def test_dataset_round_trip(tmp_path, small_dataset):
    g = small_dataset.graph
    fileio.write_graph(tmp_path / 'g.tsv', g)
    fileio.write_cascades(tmp_path / 'c.jsonl', small_dataset.cascades, g)
    fileio.write_split(tmp_path / 's.tsv', small_dataset.split)
    ds = fileio.read_dataset(tmp_path / 'g.tsv', tmp_path / 'c.jsonl', tmp_path / 's.tsv')
    assert ds.split == small_dataset.split
    assert [c.final_active for c in ds.cascades] == [c.final_active for c in small_dataset.cascades]


@pytest.mark.parametrize('share_w', [False, True])
def test_checkpoint_is_byte_stable(tmp_path, share_w):
    params = model.init_params(3, 2, 5, 4, share_w=share_w, hidden=(4, 2))
    fileio.write_checkpoint(tmp_path / 'm.ckpt', params)
    data = (tmp_path / 'm.ckpt').read_bytes()
    assert data.startswith(b'CGNN1')
    back = fileio.read_checkpoint(tmp_path / 'm.ckpt')
    assert back.dims == (3, 4, 2)
    assert back.share_w == share_w
    assert fileio.checkpoint_bytes(back) == data
    for name, t in params.tensors.items():
        np.testing.assert_array_equal(back.tensors[name], t)


def test_checkpoint_errors(tmp_path):
    (tmp_path / 'bad.ckpt').write_bytes(b'NOPE')
    with pytest.raises(SchemaError):
        fileio.read_checkpoint(tmp_path / 'bad.ckpt')
    data = fileio.checkpoint_bytes(model.init_params(2, 1, 3, 0))
    (tmp_path / 'short.ckpt').write_bytes(data[:-8])
    with pytest.raises(SchemaError):
        fileio.read_checkpoint(tmp_path / 'short.ckpt')


def test_log_round_trip(tmp_path):
    records = [dict(epoch=1, train_loss=0.5, train_mrse=0.4, l_user=0.2, val_mrse=0.3)]
    fileio.write_log(tmp_path / 'log.jsonl', records)
    assert fileio.read_log(tmp_path / 'log.jsonl') == records


def test_feature_matrix_round_trip(tmp_path):
    dense = np.array([[1.5, 2.0], [0.1, 3.0]])
    fileio.write_feature_matrix(tmp_path / 'f.csv', ['c1', 'c2'], dense, ['f_a', 'f_b'], [['u1', 'u7'], []])
    header = (tmp_path / 'f.csv').read_text().splitlines()[0]
    assert header == 'cascade_id,f_a,f_b,node_ids'
    ids, back, sparse = fileio.read_feature_matrix(tmp_path / 'f.csv')
    assert ids == ['c1', 'c2']
    np.testing.assert_array_equal(back.to_numpy(), dense)
    assert sparse == [['u1', 'u7'], []]


def test_predictions_round_trip(tmp_path):
    fileio.write_predictions(tmp_path / 'p.jsonl', ['a', 'b'], [3.5, 1.25], [4, 1])
    assert fileio.read_predictions(tmp_path / 'p.jsonl') == {'a': (3.5, 4), 'b': (1.25, 1)}


def test_metrics_file_is_sorted_json(tmp_path):
    fileio.write_metrics(tmp_path / 'm.json', metrics.compute_metrics([150], [100]))
    text = (tmp_path / 'm.json').read_text()
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert data['mrse'] == pytest.approx(0.25)


def test_train_config_file_round_trip(tmp_path):
    cfg = train.TrainConfig(K=2, hidden=(8, 4), lr_other=0.01, share_w=True)
    configs.write_config_file(cfg, tmp_path / 'train.cfg')
    values = configs.read_config_file(tmp_path / 'train.cfg', train.TrainConfig)
    assert train.TrainConfig(**values) == cfg


def test_config_file_errors(tmp_path):
    path = tmp_path / 'train.cfg'
    path.write_text('# tuned\nK = 2\nbogus = 1\n')
    with pytest.raises(SchemaError):
        configs.read_config_file(path, train.TrainConfig)
    path.write_text('K = two\n')
    with pytest.raises(SchemaError):
        configs.read_config_file(path, train.TrainConfig)


def test_git_blob_hash(tmp_path):
    path = tmp_path / 'hello.txt'
    path.write_bytes(b'hello\n')
    assert git_blob_hash(path) == 'ce013625030ba8dba906f756967f9e9ca394464a'


def test_records_file_feeds_ingestion(tmp_path, named_graph):
    path = tmp_path / 'r.jsonl'
    path.write_text('{"id": "t1", "activations": [["alice", 10], ["bob", 20], ["carol", 500]]}\n')
    items = cascades.cascades_from_records(fileio.read_cascade_records(path), named_graph, window=60)
    assert items[0].observed_active == frozenset([0, 1])
