"""
NN-grams 网络测试

覆盖计数缩放、初始化、前向计算、参数量、最近邻与检查点读写
"""

import math

import numpy as np
import pytest

from nngrams.config.settings import CHECKPOINT_MAGIC, load_production_config
from nngrams.core.model import (
    FeatureBuilder,
    FeatureVector,
    ModelConfig,
    ModelParams,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    nearest_neighbors,
    parameter_count,
    rescale_count,
    rescale_counts,
    save_checkpoint,
)
from nngrams.core.ngram import count_matrix
from nngrams.exceptions import ConfigError, DataError

SMALL = ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5)


def hand_params() -> ModelParams:
    """V=3, d=K=N=1, 各层宽度为 1 的手算网络"""
    config = ModelConfig(V=3, d=1, K=1, N=1, H_A=1, H_B=1, H_C=1)
    return ModelParams(
        config=config,
        E=np.array([[1.0], [2.0], [3.0]]),
        W_A=np.array([[0.5], [-1.0]]),
        b_A=np.array([1.0]),
        W_B=np.array([[2.0], [1.0]]),
        b_B=np.array([0.1]),
        W_C=np.array([[1.0], [0.5]]),
        b_C=np.array([-0.2]),
        w_out=np.array([3.0]),
        b_out=np.array([0.25]),
    )


# ============================== 计数缩放 ==============================


def test_rescale_values():
    """测试计数缩放的典型取值"""
    assert rescale_count(0) == -1.0
    assert rescale_count(1) == 0.0
    assert abs(rescale_count(math.e ** 10) - 1.0) < 1e-5
    assert rescale_count(100, base=10.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        rescale_count(-1)


def test_rescale_counts_vectorized():
    """测试向量化缩放与逐元素缩放一致"""
    counts = np.array([[0, 1, 7], [22026, 3, 0]])
    expected = np.array([[rescale_count(int(c)) for c in row] for row in counts])
    np.testing.assert_allclose(rescale_counts(counts), expected)


# ============================== 特征 ==============================


def test_feature_builder_matches_count_matrix(toy_vocab, toy_store):
    """测试按历史缓存的特征与直接抽取的计数矩阵一致"""
    config = ModelConfig(V=toy_vocab.size, d=2, K=3, N=2, H_A=2, H_B=2, H_C=2)
    builder = FeatureBuilder(config, toy_store)
    history = tuple(toy_vocab.lookup(w) for w in ("to", "want", "we"))
    for word in range(toy_vocab.size):
        feat = builder.build(word, history)
        expected = count_matrix(toy_store, (word,) + history, N=2, K=3)
        np.testing.assert_array_equal(feat.counts_raw, expected)
        assert feat.word_ids.tolist() == [word, *history]


def test_feature_builder_requires_store():
    """测试使用计数的模式必须提供计数存储"""
    with pytest.raises(ConfigError):
        FeatureBuilder(SMALL, None)
    FeatureBuilder(ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="embeddings_only"), None)


def test_feature_vector_rejects_bad_shapes():
    """测试特征形状与负计数校验"""
    with pytest.raises(ValueError):
        FeatureVector(word_ids=[1, 2], counts_raw=[[0, 0]])
    with pytest.raises(ValueError):
        FeatureVector(word_ids=[1], counts_raw=[[-1]])


# ============================== 初始化与前向 ==============================


def test_init_is_deterministic_and_bounded():
    """测试相同种子逐位相同，权重落在初始化范围内，偏置为 0"""
    a, b = init_params(SMALL, 3), init_params(SMALL, 3)
    for name in a.names():
        assert np.array_equal(getattr(a, name), getattr(b, name)), f"{name} 不可复现"
    assert not np.array_equal(a.W_A, init_params(SMALL, 4).W_A)
    bound = math.sqrt(6.0 / (SMALL.V + SMALL.d))
    assert np.abs(a.E).max() <= bound
    assert not a.b_A.any() and not a.b_C.any() and not a.b_out.any()
    a.validate()


def test_hand_computed_forward():
    """测试手算网络的输出"""
    params = hand_params()
    feat = FeatureVector(word_ids=[2, 0], counts_raw=[[0], [1]])
    score, cache = forward(params, feat)
    assert score == pytest.approx(4.15, abs=1e-12)
    np.testing.assert_allclose(cache["z_A"], [[1.5]])
    np.testing.assert_allclose(cache["z_B"], [[-1.9]])


def test_zero_network_outputs_bias():
    """测试所有权重为 0 时输出等于 b_out"""
    params = init_params(SMALL, 0).zeros_like()
    params.b_out[0] = -0.7
    feat = FeatureVector(word_ids=[1, 2, 3, 4], counts_raw=np.arange(8).reshape(4, 2))
    assert forward(params, feat)[0] == -0.7


def test_relu_a_permutation_symmetry():
    """测试同时置换 ReLu-A 的输出单元与 W_C 的对应行，输出不变"""
    params = init_params(SMALL, 1)
    rng = np.random.default_rng(1)
    for name in params.names():
        getattr(params, name)[...] = rng.normal(size=getattr(params, name).shape)
    perm = rng.permutation(SMALL.H_A)
    permuted = params.copy()
    permuted.W_A = params.W_A[:, perm]
    permuted.b_A = params.b_A[perm]
    permuted.W_C = np.vstack([params.W_C[: SMALL.H_A][perm], params.W_C[SMALL.H_A :]])
    word_ids = rng.integers(0, SMALL.V, size=(6, SMALL.K + 1))
    counts = rng.normal(size=(6, SMALL.K + 1, SMALL.N))
    np.testing.assert_allclose(
        forward_batch(params, word_ids, counts)[0], forward_batch(permuted, word_ids, counts)[0]
    )


def test_forward_batch_matches_single():
    """测试批量前向与逐个前向一致"""
    params = init_params(SMALL, 2)
    rng = np.random.default_rng(2)
    feats = [
        FeatureVector(word_ids=rng.integers(0, SMALL.V, size=SMALL.K + 1), counts_raw=rng.integers(0, 5, size=(4, 2)))
        for _ in range(5)
    ]
    scores, _ = forward_batch(
        params, np.stack([f.word_ids for f in feats]), np.stack([f.counts_rescaled for f in feats])
    )
    np.testing.assert_allclose(scores, [forward(params, f)[0] for f in feats])


def test_forward_rejects_out_of_range_ids():
    """测试越界词 id"""
    params = init_params(SMALL, 0)
    with pytest.raises(ValueError):
        forward_batch(params, np.array([[0, 1, 2, 10]]), np.zeros((1, 4, 2)))


def test_branch_masking():
    """测试单分支模式只保留对应参数，且打分与另一分支的输入无关"""
    counts_only = ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="counts_only")
    params = init_params(counts_only, 0)
    assert params.E is None and params.W_A is None
    rng = np.random.default_rng(0)
    for name in params.names():
        getattr(params, name)[...] = rng.normal(size=getattr(params, name).shape)
    counts = np.arange(8).reshape(4, 2)
    a = forward(params, FeatureVector(word_ids=[0, 1, 2, 3], counts_raw=counts))[0]
    b = forward(params, FeatureVector(word_ids=[9, 8, 7, 6], counts_raw=counts))[0]
    assert a == b

    emb_only = ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="embeddings_only")
    params = init_params(emb_only, 0)
    assert params.W_B is None and params.W_C.shape == (4, 5)
    ids = [1, 2, 3, 4]
    a = forward(params, FeatureVector(word_ids=ids, counts_raw=np.zeros((4, 2))))[0]
    b = forward(params, FeatureVector(word_ids=ids, counts_raw=np.full((4, 2), 50)))[0]
    assert a == b


# ============================== 参数量 ==============================


def test_parameter_count_small():
    """测试小配置的参数量"""
    assert parameter_count(SMALL) == 129
    assert parameter_count(ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="counts_only")) == 53
    assert parameter_count(ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="embeddings_only")) == 87
    assert parameter_count(SMALL) == sum(a.size for a in init_params(SMALL, 0).arrays().values())


def test_parameter_count_production():
    """测试生产规模配置的参数量（在 517M 的 1% 以内）"""
    total = parameter_count(ModelConfig.from_run_config(load_production_config()))
    assert total == 515_950_849
    assert abs(total - 517_000_000) / 517_000_000 < 0.01


def test_from_run_config_vocab_mismatch():
    """测试配置中的词表大小与词表文件不一致"""
    config = load_production_config()
    with pytest.raises(ConfigError):
        ModelConfig.from_run_config(config, vocab_size=10)


def test_model_config_validation():
    """测试非法结构配置"""
    with pytest.raises(ConfigError):
        ModelConfig(V=10, d=0, K=3, N=2, H_A=4, H_B=3, H_C=5)
    with pytest.raises(ConfigError):
        ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="both")


# ============================== 最近邻 ==============================


def test_nearest_neighbors_brute_force():
    """测试最近邻与暴力排序一致，且不含查询词本身"""
    params = init_params(SMALL, 5)
    for word in range(SMALL.V):
        result = nearest_neighbors(params, word, 4)
        brute = sorted(
            ((float(np.linalg.norm(params.E[i] - params.E[word])), i) for i in range(SMALL.V) if i != word)
        )[:4]
        assert [i for i, _ in result] == [i for _, i in brute]
        assert all(i != word for i, _ in result)


def test_nearest_neighbors_ties_by_id():
    """测试距离相同时按 id 升序"""
    params = init_params(SMALL, 0)
    params.E[...] = 0.0
    params.E[0] = [1.0, 0.0]
    assert [i for i, _ in nearest_neighbors(params, 0, 3)] == [1, 2, 3]


def test_nearest_neighbors_argument_errors():
    """测试参数越界与无词向量模式"""
    params = init_params(SMALL, 0)
    with pytest.raises(ValueError):
        nearest_neighbors(params, 0, SMALL.V)
    counts_only = init_params(ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode="counts_only"), 0)
    with pytest.raises(ValueError):
        nearest_neighbors(counts_only, 0, 1)


# ============================== 检查点 ==============================


@pytest.mark.parametrize("mode", ["full", "counts_only", "embeddings_only"])
def test_checkpoint_round_trip(tmp_path, mode):
    """测试检查点保存后加载，参数逐位相同"""
    config = ModelConfig(V=10, d=2, K=3, N=2, H_A=4, H_B=3, H_C=5, input_mode=mode)
    params = init_params(config, 9)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path)
    assert path.read_bytes().startswith(CHECKPOINT_MAGIC + b"\n")
    loaded = load_checkpoint(path)
    assert loaded.config == config
    assert loaded.names() == params.names()
    for name in params.names():
        assert np.array_equal(getattr(loaded, name), getattr(params, name))


def test_checkpoint_corruption(tmp_path):
    """测试截断、尾部多余数据和错误魔数"""
    path = tmp_path / "model.ckpt"
    save_checkpoint(init_params(SMALL, 0), path)
    blob = path.read_bytes()

    path.write_bytes(blob[:-8])
    with pytest.raises(DataError):
        load_checkpoint(path)
    path.write_bytes(blob + b"\x00" * 8)
    with pytest.raises(DataError):
        load_checkpoint(path)
    path.write_bytes(b"NOTNNGRM" + blob[8:])
    with pytest.raises(DataError):
        load_checkpoint(path)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.ckpt")
