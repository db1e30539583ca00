"""
命令行接口测试

每个测试直接调用 run()，检查退出码与标准输出
"""

import pytest
from conftest import HELLO_EDGES, TOY_CORPUS, write_lattice_text

from nngrams.core.corpus import Vocabulary
from nngrams.core.lattice import read_nbest
from nngrams.core.model import load_checkpoint
from nngrams.core.ngram import NGramStore
from nngrams.main import run

SMALL_MODEL = [
    "--set", "model.d=2",
    "--set", "model.K=2",
    "--set", "model.N=2",
    "--set", "model.H_A=4",
    "--set", "model.H_B=3",
    "--set", "model.H_C=4",
    "--set", "train.batch_size=4",
    "--set", "train.max_steps=3",
]


@pytest.fixture
def toy_files(tmp_path):
    """语料、词表与三阶计数"""
    corpus = tmp_path / "train.txt"
    corpus.write_text("\n".join(TOY_CORPUS) + "\n", encoding="utf-8")
    vocab, counts = tmp_path / "vocab.txt", tmp_path / "counts.ngs"
    assert run(["vocab", "--corpus", str(corpus), "--out", str(vocab)]) == 0
    assert run(["count", "--corpus", str(corpus), "--vocab", str(vocab), "--out", str(counts), "--order", "3"]) == 0
    return corpus, vocab, counts


@pytest.fixture
def hello_file(tmp_path):
    return write_lattice_text(tmp_path / "utt1.lat", 0, 6, HELLO_EDGES)


# ============================== 参数与退出码 ==============================


def test_help_and_unknown_command():
    """测试 --help 返回 0，未知子命令返回 1"""
    assert run(["--help"]) == 0
    assert run(["nosuch"]) == 1
    assert run([]) == 1


def test_random_command_requires_seed():
    """测试随机化命令缺少种子时返回 1"""
    assert run(["gradcheck"]) == 1


def test_missing_input_is_data_error(tmp_path):
    """测试输入文件不存在时返回 2"""
    assert run(["vocab", "--corpus", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "v.txt")]) == 2
    assert not (tmp_path / "v.txt").exists()


def test_bad_override_is_config_error(tmp_path, toy_files):
    """测试无效的配置覆盖返回 1"""
    corpus, vocab, _ = toy_files
    args = ["vocab", "--corpus", str(corpus), "--out", str(tmp_path / "v.txt"), "--set", "corpus.max_vocab=2"]
    assert run(args) == 1


# ============================== 单项命令 ==============================


def test_param_count_production(capsys):
    """测试生产规模配置的参数量"""
    assert run(["param-count", "--production"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "515950849"
    assert out[1] == "within 1% of 517M"


def test_gradcheck_passes(capsys):
    """测试梯度校验命令"""
    assert run(["gradcheck", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("max_relative_error=")
    assert out.splitlines()[-1] == "PASS"


def test_wer_command(tmp_path, capsys):
    """测试 WER 命令：相同文件为 0，语句 id 不对应时返回 2"""
    ref = tmp_path / "ref.txt"
    ref.write_text("u1\ta b c\nu2\td e\n", encoding="utf-8")
    assert run(["wer", "--ref", str(ref), "--hyp", str(ref)]) == 0
    assert capsys.readouterr().out.strip() == "WER=0.0 S=0 D=0 I=0 N=5"

    hyp = tmp_path / "hyp.txt"
    hyp.write_text("u1\ta x c\nu3\td e\n", encoding="utf-8")
    assert run(["wer", "--ref", str(ref), "--hyp", str(hyp)]) == 2

    plain_ref, plain_hyp = tmp_path / "plain_ref.txt", tmp_path / "plain_hyp.txt"
    plain_ref.write_text("a b\nc d\n", encoding="utf-8")
    plain_hyp.write_text("a b\nc x\n", encoding="utf-8")
    assert run(["wer", "--ref", str(plain_ref), "--hyp", str(plain_hyp)]) == 0
    assert capsys.readouterr().out.strip() == "WER=25.0 S=1 D=0 I=0 N=4"


def test_pinch_command(hello_file, capsys):
    """测试夹紧命令的输出"""
    assert run(["pinch", "--lattice", str(hello_file)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("1-best: hello how are you doing score=")
    assert lines[1] == "0 hello excluded=multiword_alignment"
    assert lines[2].startswith("1 how:") and " now:" in lines[2]
    assert lines[3] == "2 are excluded=no_confusions"
    assert lines[5].startswith("4 doing:") and " going:" in lines[5]


def test_nbest_command(tmp_path, hello_file, capsys):
    """测试 n-best 命令的打印与写文件"""
    assert run(["nbest", "--lattice", str(hello_file), "--n", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert lines[0].split()[2:] == ["hello", "how", "are", "you", "doing"]
    out = tmp_path / "utt1.nbest"
    assert run(["nbest", "--lattice", str(hello_file), "--n", "100", "--out", str(out)]) == 0
    assert len(read_nbest(out)) == 8


def test_noise_speech_command(tmp_path, hello_file):
    """测试从词格目录构建语音噪声表"""
    vocab = tmp_path / "speech_vocab.txt"
    Vocabulary(("<s>", "</s>", "<unk>", "hello", "how", "now", "are", "you", "doing", "going", "well", "o")).save(
        vocab
    )
    table, corpus_out = tmp_path / "noise.tbl", tmp_path / "speech.txt"
    args = ["noise-speech", "--lattices", str(tmp_path), "--vocab", str(vocab), "--out", str(table)]
    assert run(args + ["--corpus-out", str(corpus_out), "--threshold", "0.1"]) == 0
    assert len(table.read_text(encoding="utf-8").splitlines()) == 2
    assert corpus_out.read_text(encoding="utf-8") == "utt1\thello how are you doing\n"

    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["noise-speech", "--lattices", str(empty), "--vocab", str(vocab), "--out", str(table)]) == 2


def test_count_command_shows_tree(tmp_path, toy_files, capsys):
    """测试计数命令打印前缀树与各层规模"""
    corpus, vocab, counts = toy_files
    assert NGramStore.load(counts).max_order == 3
    args = ["count", "--corpus", str(corpus), "--vocab", str(vocab), "--out", str(tmp_path / "c2.ngs")]
    assert run(args + ["--order", "2", "--show-tree", "--tree-depth", "1"]) == 0
    out = capsys.readouterr().out
    assert "go (4)" in out
    assert "level=1 nodes=" in out


def test_noise_text_command(toy_files, capsys):
    """测试文本噪声命令：输出 f 行，且同一种子结果相同"""
    _, vocab, counts = toy_files
    args = ["noise-text", "--vocab", str(vocab), "--counts", str(counts), "--order", "3"]
    args += ["--history", "we want", "--f", "5", "--seed", "3"]
    assert run(args) == 0
    first = capsys.readouterr().out
    assert len(first.splitlines()) == 5
    assert run(args) == 0
    assert capsys.readouterr().out == first


# ============================== 端到端流水线 ==============================


def test_katz_pipeline(tmp_path, toy_files, capsys):
    """测试 Katz 估计、导出 ARPA、两种来源打分一致"""
    corpus, vocab, counts = toy_files
    arpa = tmp_path / "lm.arpa"
    assert run(["katz", "train", "--vocab", str(vocab), "--counts", str(counts), "--out", str(arpa), "--order", "3"]) == 0
    assert "\\data\\" in arpa.read_text(encoding="utf-8")
    capsys.readouterr()

    text = tmp_path / "text.txt"
    text.write_text("we want to go\ngo home\n", encoding="utf-8")
    base = ["katz", "score", "--vocab", str(vocab), "--text", str(text), "--order", "3"]
    assert run(base + ["--counts", str(counts)]) == 0
    from_counts = [float(x) for x in capsys.readouterr().out.split()]
    assert run(base + ["--arpa", str(arpa)]) == 0
    from_arpa = [float(x) for x in capsys.readouterr().out.split()]
    assert len(from_counts) == 2
    assert from_arpa == pytest.approx(from_counts, rel=1e-6)
    assert all(score < 0.0 for score in from_counts)

    assert run(["katz", "score", "--vocab", str(vocab), "--text", str(text)]) == 1


def test_train_score_rescore_pipeline(tmp_path, toy_files, hello_file, capsys):
    """测试训练、打分、近邻与重打分命令串联"""
    corpus, vocab, counts = toy_files
    checkpoint = tmp_path / "model.ckpt"
    train_args = ["train", "--vocab", str(vocab), "--counts", str(counts), "--out", str(checkpoint)]
    train_args += ["--corpus", str(corpus), "--katz-order", "2", "--seed", "1"] + SMALL_MODEL
    assert run(train_args) == 0
    out = capsys.readouterr().out
    assert "steps=3 " in out and "stop=max_steps" in out
    params = load_checkpoint(checkpoint)
    assert params.config.V == Vocabulary.load(vocab).size and params.config.K == 2

    assert run(train_args[:-len(SMALL_MODEL) - 2] + SMALL_MODEL) == 1

    text = tmp_path / "text.txt"
    text.write_text("we want to go\nhome\n", encoding="utf-8")
    score_args = ["score", "--checkpoint", str(checkpoint), "--vocab", str(vocab), "--text", str(text)]
    assert run(score_args + ["--counts", str(counts)]) == 0
    scores = [float(x) for x in capsys.readouterr().out.split()]
    assert len(scores) == 2

    assert run(["neighbors", "--checkpoint", str(checkpoint), "--vocab", str(vocab), "--word", "we", "--k", "2"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2
    assert run(["neighbors", "--checkpoint", str(checkpoint), "--vocab", str(vocab), "--word", "zebra"]) == 2

    nbest_dir = tmp_path / "nbest"
    assert run(["nbest", "--lattice", str(hello_file), "--out", str(nbest_dir / "utt1.nbest")]) == 0
    testset = tmp_path / "test.tsv"
    testset.write_text("utt1\thello how are you doing\n", encoding="utf-8")
    rescore_args = ["rescore", "--testset", str(testset), "--nbest-dir", str(nbest_dir), "--vocab", str(vocab)]
    rescore_args += ["--counts", str(counts)]
    capsys.readouterr()

    hyp_out = tmp_path / "hyp.txt"
    assert run(rescore_args + ["--checkpoint", str(checkpoint), "--weight", "0.0", "--out", str(hyp_out)]) == 0
    assert "WER=0.0" in capsys.readouterr().out
    assert hyp_out.read_text(encoding="utf-8") == "utt1\thello how are you doing\n"

    assert run(rescore_args + ["--model", "katz6", "--katz-order", "3", "--weight", "0.5"]) == 0
    assert "WER=" in capsys.readouterr().out
    assert run(rescore_args + ["--model", "nngrams"]) == 1
