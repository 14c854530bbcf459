"""Embedding store wire format and joins."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from biovista.embeddings import (EMBED_DIM, EmbeddingRecord, EmbeddingStore,
                                 MOD_2D, MOD_3D, average_instances,
                                 export_tsv, join_modalities, parse_store,
                                 read_store, write_store)
from biovista.errors import (BadMagic, DimMismatch, DuplicateKey,
                             MissingModality, NoProbs, TruncatedFile,
                             VersionUnsupported)
from biovista.rng import normal_array

from conftest import make_samples


def make_records(sample_ids, dim=16, instances=(0,), with_probs=True):
    recs = []
    k = 0
    for sid in sample_ids:
        for mod in (MOD_2D, MOD_3D):
            for inst in instances:
                emb = normal_array(1000 + k, dim).astype(np.float32)
                probs = None
                if with_probs:
                    p = 1.0 / (1.0 + np.exp(-emb[0]))
                    probs = (float(1.0 - p), float(p))
                recs.append(EmbeddingRecord(
                    sample_id=sid, modality=mod, instance=inst,
                    embedding=emb, probs=probs))
                k += 1
    return recs


def test_roundtrip_with_and_without_probs(tmp_path):
    recs = make_records(["a", "b"], with_probs=True)
    recs += make_records(["c"], with_probs=False)
    path = tmp_path / "e.bvem"
    write_store(recs, path, dim=16)
    store = read_store(path)
    assert store.dim == 16
    assert len(store) == len(recs)
    for rec in recs:
        got = store.get(rec.sample_id, rec.modality, rec.instance)
        assert got is not None
        assert np.array_equal(got.embedding, rec.embedding)
        if rec.probs is None:
            assert got.probs is None
        else:
            assert got.probs == pytest.approx(rec.probs, abs=1e-7)


def test_rewrite_byte_identical(tmp_path):
    recs = make_records(["s1", "s2", "s3"], dim=8)
    p1, p2 = tmp_path / "a.bvem", tmp_path / "b.bvem"
    write_store(recs, p1, dim=8)
    store = read_store(p1)
    # records keep insertion order in the dict, so rewrite reproduces bytes
    write_store(list(store.records.values()), p2, dim=8)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    recs = make_records(["x"], dim=4)
    path = tmp_path / "e.bvem"
    write_store(recs, path, dim=4)
    data = path.read_bytes()
    assert data[0:4] == b"BVEM"
    version, dim, count = struct.unpack_from("<HIQ", data, 4)
    assert (version, dim, count) == (1, 4, 2)
    # first record: id_len u16 then the id bytes
    (id_len,) = struct.unpack_from("<H", data, 18)
    assert id_len == 1 and data[20:21] == b"x"


def test_empty_store_roundtrip(tmp_path):
    path = tmp_path / "e.bvem"
    write_store([], path, dim=EMBED_DIM)
    store = read_store(path)
    assert len(store) == 0 and store.dim == EMBED_DIM


def test_write_rejects_wrong_dim(tmp_path):
    rec = EmbeddingRecord("s", MOD_2D, 0,
                          np.zeros(15, dtype=np.float32), None)
    with pytest.raises(DimMismatch):
        write_store([rec], tmp_path / "e.bvem", dim=16)


def test_write_rejects_unknown_modality(tmp_path):
    rec = EmbeddingRecord("s", "4d", 0, np.zeros(4, dtype=np.float32), None)
    with pytest.raises(ValueError):
        write_store([rec], tmp_path / "e.bvem", dim=4)


def test_parse_rejections(tmp_path):
    recs = make_records(["ab"], dim=4)
    path = tmp_path / "e.bvem"
    write_store(recs, path, dim=4)
    data = bytearray(path.read_bytes())

    bad = bytearray(data)
    bad[0:4] = b"XVEM"
    with pytest.raises(BadMagic):
        parse_store(bytes(bad))

    bad = bytearray(data)
    struct.pack_into("<H", bad, 4, 2)
    with pytest.raises(VersionUnsupported):
        parse_store(bytes(bad))

    with pytest.raises(TruncatedFile):
        parse_store(bytes(data[:10]))
    with pytest.raises(TruncatedFile):
        parse_store(bytes(data[:-3]))  # inside the last embedding

    # duplicate key: double the payload, keep the count in sync
    payload = bytes(data[18:])
    dup = bytes(data[:4]) + struct.pack("<HIQ", 1, 4, 4) + payload + payload
    with pytest.raises(DuplicateKey):
        parse_store(dup)

    # bad modality code in the first record (after id_len(2) + id(2))
    bad = bytearray(data)
    bad[18 + 2 + 2] = 7
    with pytest.raises(BadMagic):
        parse_store(bytes(bad))


def test_join_modalities_order_and_layout():
    samples = make_samples(4, 0)
    recs = make_records([s.sample_id for s in samples], dim=8)
    store = EmbeddingStore(dim=8, records={r.key(): r for r in recs})
    rows = join_modalities(store, samples, 0)
    assert [r[0] for r in rows] == [s.sample_id for s in samples]
    for (sid, vec, label, split), s in zip(rows, samples):
        assert vec.shape == (16,)
        assert label == s.label and split == s.split
        r2 = store.get(sid, MOD_2D, 0)
        r3 = store.get(sid, MOD_3D, 0)
        assert np.array_equal(vec[:8], r2.embedding)
        assert np.array_equal(vec[8:], r3.embedding)


def test_join_modalities_missing_lists_pairs():
    samples = make_samples(3, 0)
    recs = make_records([s.sample_id for s in samples], dim=8)
    # drop the 3d record of the second sample
    victim = (samples[1].sample_id, MOD_3D, 0)
    store = EmbeddingStore(
        dim=8, records={r.key(): r for r in recs if r.key() != victim})
    with pytest.raises(MissingModality) as exc:
        join_modalities(store, samples, 0)
    assert samples[1].sample_id in str(exc.value)
    assert exc.value.pairs == [(samples[1].sample_id, MOD_3D)]


def test_join_modalities_wrong_instance():
    samples = make_samples(2, 0)
    recs = make_records([s.sample_id for s in samples], dim=8, instances=(0,))
    store = EmbeddingStore(dim=8, records={r.key(): r for r in recs})
    with pytest.raises(MissingModality):
        join_modalities(store, samples, 1)


def test_average_instances_mean_and_renormalise():
    recs = [
        EmbeddingRecord("s", MOD_2D, 0, np.zeros(4, dtype=np.float32),
                        (0.2, 0.8)),
        EmbeddingRecord("s", MOD_2D, 1, np.zeros(4, dtype=np.float32),
                        (0.6, 0.4)),
        EmbeddingRecord("s", MOD_3D, 0, np.zeros(4, dtype=np.float32),
                        (0.9, 0.1)),
    ]
    store = EmbeddingStore(dim=4, records={r.key(): r for r in recs})
    p = average_instances(store, "s", MOD_2D)
    assert p == pytest.approx((0.4, 0.6))
    assert sum(p) == pytest.approx(1.0)
    # single instance passes through (after renormalisation)
    assert average_instances(store, "s", MOD_3D) == pytest.approx((0.9, 0.1))


def test_average_instances_no_probs():
    recs = [EmbeddingRecord("s", MOD_2D, 0, np.zeros(4, dtype=np.float32),
                            None)]
    store = EmbeddingStore(dim=4, records={r.key(): r for r in recs})
    with pytest.raises(NoProbs):
        average_instances(store, "s", MOD_2D)
    with pytest.raises(NoProbs):
        average_instances(store, "missing", MOD_2D)


def test_export_tsv(tmp_path):
    recs = make_records(["b", "a"], dim=3)
    store = EmbeddingStore(dim=3, records={r.key(): r for r in recs})
    path = tmp_path / "dump.tsv"
    export_tsv(store, path)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == [
        "sample_id", "modality", "instance", "p_low", "p_high",
        "e0", "e1", "e2"]
    assert len(lines) == 1 + len(recs)
    # sorted by key: sample a before b, 2d before 3d
    first = lines[1].split("\t")
    assert first[0] == "a" and first[1] == "2d"
    assert len(first) == 8
