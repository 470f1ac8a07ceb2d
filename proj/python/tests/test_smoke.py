import math

import pytest

import nasrec


def small_config(blocks=2):
    cfg = nasrec.preset("nasrec_full")
    cfg.update(num_blocks=blocks, dense_dims=[8, 16], sparse_dims=[4, 8], embedding_dim=4,
               num_dense_features=4, vocab_sizes=[10] * 4)
    return cfg


def test_cardinality_ratio_is_fifteen_to_the_n():
    for n in (1, 2, 3):
        full = nasrec.preset("nasrec_full")
        small = nasrec.preset("nasrec_small")
        full["num_blocks"] = small["num_blocks"] = n
        assert nasrec.cardinality(full)["per_branch"] == nasrec.cardinality(small)["per_branch"] * 15**n


def test_sampled_genotypes_are_valid_and_costed():
    cfg = small_config()
    for g in nasrec.sample(cfg, "soac", n=20, seed=1):
        assert nasrec.validate(g, cfg) == []
        assert all(len(b["dense_ops"]) == 1 for b in g["blocks"])
        c = nasrec.cost(g, cfg, batch=2)
        assert c["flops"] == 2 * nasrec.cost(g, cfg)["flops"]
        assert c["weights_with_bias"] > c["weights_without_bias"]


def test_invalid_genotype_reports_rules():
    cfg = small_config()
    g = nasrec.sample(cfg, "aoac", n=1, seed=2)[0]
    g["blocks"][0]["dense_conns"] = [1]
    assert any("conn-order" in v for v in nasrec.validate(g, cfg))
    with pytest.raises(nasrec.NasrecError):
        nasrec.cost(g, cfg)


def test_metrics_and_schedules():
    assert nasrec.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert math.isclose(nasrec.logloss([0.5, 0.5], [1, 0]), math.log(2))
    assert nasrec.kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0
    assert math.isclose(nasrec.pearson_rho([1, 2, 3], [2, 4, 6]), 1.0)
    assert [nasrec.mutations_per_child(i, 5, 20) for i in (0, 19, 20, 80, 99)] == [5, 5, 4, 1, 1]
    assert [nasrec.warmup_p(800, 0.25, s) for s in (0, 100, 200, 800)] == [1.0, 0.5, 0.0, 0.0]


def test_evolve_with_python_fitness():
    cfg = small_config(3)

    def fitness(g):
        return -sum(op["kind"] == "FC" for b in g["blocks"] for op in b["dense_ops"])

    r = nasrec.evolve(cfg, fitness, {"population": 8, "iterations": 10, "tournament": 4, "children": 2, "seed": 1})
    assert all(a >= b for a, b in zip(r["best"], r["best"][1:]))
    assert r["evaluated"] == 8 + 10 * 2
    assert r["top"][0]["fitness"] == r["best"][-1]


def test_train_and_evaluate_end_to_end(tmp_path):
    data = tmp_path / "data.bin"
    stats = nasrec.synth(data, rows=2000, num_dense=4, num_sparse=4, vocab=10, seed=3)
    assert stats["rows"] == 2000
    run = {"supernet": {"num_blocks": 2, "dense_dims": [8, 16], "sparse_dims": [4, 8], "embedding_dim": 4},
           "train": {"batch_size": 128, "seed": 3}}
    out = nasrec.train_supernet(data, tmp_path / "supernet", run)
    assert out["steps"] == 13 and math.isfinite(out["final_loss"])
    cfg = small_config()
    g = nasrec.sample(cfg, "soac", n=1, seed=4)[0]
    shared = nasrec.eval_subnet(tmp_path / "supernet", data, g, 0, run)
    tuned = nasrec.eval_subnet(tmp_path / "supernet", data, g, 20, run)
    assert shared["n_examples"] == tuned["n_examples"] == 200
    assert tuned["logloss"] != shared["logloss"]
