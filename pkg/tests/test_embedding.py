import numpy as np
import pytest
import torch

from qosmgaa.embedding import (EmbeddingTable, init_embeddings, load_embeddings,
                               lookup, save_embeddings)
from qosmgaa.errors import DomainError


def test_init_statistics():
    t = init_embeddings(5, 32, seed=1, scale=0.1)
    mean = t.weight.mean().item()
    assert abs(mean) < 3 * 0.1 / np.sqrt(5 * 32)


def test_init_rejects_bad_args():
    with pytest.raises(DomainError):
        init_embeddings(5, 32, seed=0, scale=0.0)
    with pytest.raises(DomainError):
        init_embeddings(0, 32, seed=0)
    with pytest.raises(DomainError):
        init_embeddings(5, 0, seed=0)


def test_init_deterministic():
    a = init_embeddings(7, 4, seed=42)
    b = init_embeddings(7, 4, seed=42)
    assert torch.equal(a.weight, b.weight)
    c = init_embeddings(7, 4, seed=43)
    assert not torch.equal(a.weight, c.weight)


def test_lookup_first_row():
    t = init_embeddings(4, 3, seed=0)
    out = lookup(t, [0])
    assert torch.equal(out[0], t.weight[0])


def test_lookup_repeated_index():
    t = init_embeddings(4, 3, seed=0)
    out = lookup(t, [2, 2])
    assert torch.equal(out[0], out[1])


def test_lookup_matches_gather_oracle():
    t = init_embeddings(10, 4, seed=5)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 10, size=25)
    out = lookup(t, idx).detach().numpy()
    oracle = t.weight.detach().numpy().take(idx, axis=0)
    assert np.array_equal(out, oracle)


def test_lookup_out_of_range():
    t = init_embeddings(4, 3, seed=0)
    with pytest.raises(IndexError):
        lookup(t, [4])
    with pytest.raises(IndexError):
        lookup(t, [-1])


def test_checkpoint_bit_exact_roundtrip(tmp_path):
    t = init_embeddings(6, 5, seed=9)
    p = tmp_path / "emb.npy"
    save_embeddings(t, p)
    t2 = load_embeddings(p)
    assert t2.num_nodes == 6 and t2.dim == 5
    assert t.weight.detach().numpy().tobytes() == t2.weight.detach().numpy().tobytes()


def test_gradient_touches_only_looked_up_row():
    t = init_embeddings(6, 3, seed=2)
    before = t.weight.detach().clone()
    opt = torch.optim.SGD(t.parameters(), lr=0.1, weight_decay=0.0)
    loss = lookup(t, [3]).sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    after = t.weight.detach()
    changed = (after != before).any(dim=1)
    assert changed.tolist() == [False, False, False, True, False, False]
