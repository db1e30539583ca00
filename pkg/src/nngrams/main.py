"""
NN-grams 主程序

提供命令行接口，每个子命令对应流水线中的一个阶段
"""

import argparse
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config.settings import PATHS, RunConfig, load_production_config, load_run_config
from .core.corpus import Vocabulary, WindowStream, build_vocabulary, iter_corpus, tokenize
from .core.count_tree import CountTreeManager
from .core.lattice import n_best, one_best, parse_lattice, path_score, path_words, pinch, write_nbest
from .core.model import (
    FeatureBuilder,
    ModelConfig,
    load_checkpoint,
    nearest_neighbors,
    parameter_count,
    save_checkpoint,
)
from .core.ngram import KatzLM, NGramStore, count_ngrams, estimate_katz, read_arpa, write_arpa
from .core.noise import SpeechNoise, SpeechNoiseTable, TextNoise, build_speech_noise, text_noise
from .core.rescore import (
    EvalReport,
    RescoreConfig,
    UtteranceResult,
    evaluate,
    load_testset,
    score_hypothesis_katz,
    score_hypothesis_nngrams,
    wer,
)
from .core.synthetic import run_recovery, run_rescoring
from .core.training import TrainConfig, gradient_check, train
from .exceptions import ConfigError, DataError, NNGramsError
from .utils.file_utils import atomic_open, get_file_list, read_lines
from .utils.logger import get_logger

PRODUCTION_PARAMETERS = 517_000_000
GRADCHECK_TOLERANCE = 1e-4
KATZ6_ORDER = 6
LATTICE_EXTENSIONS = [".lat"]


def _seed(args: argparse.Namespace, config: RunConfig) -> int:
    """随机化的命令必须显式给出种子"""
    seed = args.seed if args.seed is not None else config["run.seed"]
    if seed is None:
        raise ConfigError(f"'{args.command}' 是随机化命令，需要 --seed 或 run.seed")
    return seed


def _threads(args: argparse.Namespace, config: RunConfig) -> int:
    return args.threads if args.threads is not None else config["run.threads"]


def _history_ids(text: str, vocab: Vocabulary) -> Tuple[int, ...]:
    """文本顺序的历史 -> 最近在前的 id"""
    return tuple(reversed([vocab.lookup(word) for word in text.split()]))


def _load_katz(args: argparse.Namespace, config: RunConfig, vocab: Vocabulary, order: int) -> KatzLM:
    """从 ARPA 文件或计数存储得到 Katz 模型"""
    if getattr(args, "arpa", None):
        return read_arpa(args.arpa, vocab, config["ngram.gt_cutoff"])
    if not getattr(args, "counts", None):
        raise ConfigError("需要 --counts 或 --arpa")
    store = NGramStore.load(args.counts)
    return estimate_katz(store, order, config["ngram.gt_cutoff"], vocab.size)


def _read_utterances(path: Path) -> List[Tuple[str, str]]:
    """读取 ``<utt_id>\\t<句子>`` 文件；没有制表符的行以行号为 id"""
    items = []
    for line_no, line in enumerate(read_lines(path), 1):
        if not line.strip():
            continue
        utt_id, sep, sentence = line.partition("\t")
        items.append((utt_id.strip(), sentence) if sep else (str(line_no), line))
    return items


# ============================== 子命令 ==============================


def cmd_vocab(args: argparse.Namespace, config: RunConfig) -> int:
    max_size = args.max_size if args.max_size is not None else config["corpus.max_vocab"]
    min_count = args.min_count if args.min_count is not None else config["corpus.min_count"]
    vocab = build_vocabulary(args.corpus, max_size, min_count)
    vocab.save(args.out)
    get_logger().success(f"词表已保存: {args.out}（{vocab.size} 个词）")
    return 0


def cmd_count(args: argparse.Namespace, config: RunConfig) -> int:
    vocab = Vocabulary.load(args.vocab)
    order = args.order if args.order is not None else config["ngram.max_order"]
    store = count_ngrams(iter_corpus(args.corpus, vocab), vocab, order)
    store.save(args.out)
    get_logger().success(f"计数已保存: {args.out}（{store.total_tokens} 个词次）")
    if args.show_tree:
        manager = CountTreeManager(vocab)
        manager.create_tree_from_store(store, max_depth=args.tree_depth)
        print(manager.show_tree_structure())
        for level, size in sorted(manager.get_tree_statistics().items()):
            print(f"level={level} nodes={size}")
    return 0


def cmd_katz(args: argparse.Namespace, config: RunConfig) -> int:
    logger = get_logger()
    vocab = Vocabulary.load(args.vocab)
    order = args.order if args.order is not None else config["ngram.katz_order"]

    if args.katz_command == "score":
        lm = _load_katz(args, config, vocab, order)
        for line in read_lines(args.text):
            print(repr(score_hypothesis_katz(lm, vocab, line.split())))
        return 0

    lm = _load_katz(args, config, vocab, order)
    if args.katz_command == "train":
        histories = [h for h in lm.histories() if len(h) == lm.order - 1]
        worst = abs(math.fsum(float(p) for p in lm.unigram) - 1.0)
        for history in histories:
            total = math.fsum(float(p) for p in lm.distribution(tuple(reversed(history))))
            worst = max(worst, abs(total - 1.0))
        logger.info(f"Katz 归一化检查: {len(histories)} 个最高阶历史，最大偏差 {worst:.3e}", console=True)
        if worst > 1e-6:
            logger.warning(f"存在未归一化的条件分布，最大偏差 {worst:.3e}")
    write_arpa(lm, vocab, args.out)
    logger.success(f"ARPA 模型已保存: {args.out}")
    return 0


def cmd_noise_text(args: argparse.Namespace, config: RunConfig) -> int:
    vocab = Vocabulary.load(args.vocab)
    order = args.order if args.order is not None else config["ngram.katz_order"]
    lm = _load_katz(args, config, vocab, order)
    f = args.f if args.f is not None else config["train.f"]
    rng = np.random.default_rng(_seed(args, config))
    for sample in text_noise(lm, _history_ids(args.history, vocab), f, rng):
        print(f"{vocab.id_to_word[sample.word]} {sample.log_prob!r}")
    return 0


def cmd_pinch(args: argparse.Namespace, config: RunConfig) -> int:
    lattice = parse_lattice(args.lattice)
    best = one_best(lattice)
    print(f"1-best: {' '.join(path_words(best))} score={path_score(best)!r}")
    for position, pinched in enumerate(pinch(lattice, best).positions):
        if pinched.usable:
            alts = " ".join(f"{' '.join(words)}:{p:.6f}" for words, p in pinched.confusions)
            print(f"{position} {pinched.word}:{pinched.best_posterior:.6f} {alts}")
        else:
            print(f"{position} {pinched.word} excluded={pinched.excluded}")
    return 0


def cmd_noise_speech(args: argparse.Namespace, config: RunConfig) -> int:
    vocab = Vocabulary.load(args.vocab)
    threshold = args.threshold if args.threshold is not None else config["noise.confidence_threshold"]
    files = get_file_list(args.lattices, LATTICE_EXTENSIONS)
    if not files:
        raise DataError(f"目录中没有词格文件: {args.lattices}")
    lattices = [(path.stem, parse_lattice(path)) for path in files]
    table = build_speech_noise(lattices, vocab, threshold, _threads(args, config))
    table.save(args.out, vocab)
    if args.corpus_out:
        with atomic_open(args.corpus_out, "w") as f:
            for utt_id, words in sorted(table.hypotheses.items()):
                f.write(f"{utt_id}\t{' '.join(words)}\n")
    get_logger().success(f"语音噪声表已保存: {args.out}（{len(table)} 个位置）")
    return 0


def cmd_nbest(args: argparse.Namespace, config: RunConfig) -> int:
    n = args.n if args.n is not None else config["rescore.n"]
    entries = n_best(parse_lattice(args.lattice), n)
    if args.out:
        write_nbest(entries, args.out)
        get_logger().success(f"n-best 已保存: {args.out}（{len(entries)} 条）")
    else:
        for rank, (words, score) in enumerate(entries, 1):
            print(f"{rank} {score!r} {' '.join(words)}")
    return 0


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    logger = get_logger()
    seed = _seed(args, config)
    vocab = Vocabulary.load(args.vocab)
    store = NGramStore.load(args.counts)
    model_config = ModelConfig.from_run_config(config, vocab.size)
    train_config = TrainConfig.from_run_config(config, seed)
    span = model_config.K + model_config.N - 1
    noise_type = args.noise or config["train.noise"]

    heldout = None
    if noise_type == "speech":
        if not args.speech_table or not args.speech_corpus:
            raise ConfigError("语音噪声训练需要 --speech-table 和 --speech-corpus")
        table = SpeechNoiseTable.load(args.speech_table, vocab, config["noise.data_floor"])
        utterances = _read_utterances(args.speech_corpus)
        data = WindowStream(
            [tokenize(sentence, vocab) for _, sentence in utterances],
            span,
            [utt_id for utt_id, _ in utterances],
        )
        noise_source = SpeechNoise(table, config["noise.data_floor"], config["noise.max_redraws"])
    else:
        if not args.corpus:
            raise ConfigError("文本噪声训练需要 --corpus")
        order = args.katz_order if args.katz_order is not None else config["ngram.katz_order"]
        lm = read_arpa(args.arpa, vocab, config["ngram.gt_cutoff"]) if args.arpa else estimate_katz(
            store, order, config["ngram.gt_cutoff"], vocab.size
        )
        data = WindowStream(list(iter_corpus(args.corpus, vocab)), span)
        if args.heldout:
            heldout = WindowStream(list(iter_corpus(args.heldout, vocab)), span)
        noise_source = TextNoise(lm)

    logger.section(f"训练 NN-grams（{noise_type} 噪声，f={train_config.f}）", console=False)
    params, log = train(
        train_config,
        model_config,
        data,
        store,
        noise_source,
        heldout=heldout,
        log_path=args.log,
        checkpoint_path=args.out,
    )
    save_checkpoint(params, args.out)
    print(f"steps={log.steps} examples={log.examples} skipped={log.skipped_tokens} stop={log.stop_reason}")
    logger.success(f"检查点已保存: {args.out}")
    return 0


def _nngrams_scorer(args: argparse.Namespace) -> Tuple[Vocabulary, Callable[[Sequence[str]], float]]:
    vocab = Vocabulary.load(args.vocab)
    params = load_checkpoint(args.checkpoint)
    store = NGramStore.load(args.counts) if args.counts else None
    builder = FeatureBuilder(params.config, store)

    def scorer(words: Sequence[str]) -> float:
        return score_hypothesis_nngrams(params, store, vocab, words, builder=builder)

    return vocab, scorer


def cmd_score(args: argparse.Namespace, config: RunConfig) -> int:
    _, scorer = _nngrams_scorer(args)
    for line in read_lines(args.text):
        print(repr(scorer(line.split())))
    return 0


def cmd_rescore(args: argparse.Namespace, config: RunConfig) -> int:
    if args.weight is not None:
        config.set("rescore.weight", args.weight)
    if args.model is not None:
        config.set("rescore.model", args.model)
    if args.n is not None:
        config.set("rescore.n", args.n)
    config.validate()
    rescore_config = RescoreConfig.from_run_config(config)

    if rescore_config.model == "nngrams":
        if not args.checkpoint:
            raise ConfigError("nngrams 重打分需要 --checkpoint")
        _, scorer = _nngrams_scorer(args)
    else:
        vocab = Vocabulary.load(args.vocab)
        lm = _load_katz(args, config, vocab, args.katz_order or KATZ6_ORDER)

        def scorer(words: Sequence[str]) -> float:
            return score_hypothesis_katz(lm, vocab, words)

    testset = load_testset(args.testset, args.nbest_dir)
    report = evaluate(testset, scorer, rescore_config, _threads(args, config))
    if args.out:
        with atomic_open(args.out, "w") as f:
            for utterance in report.utterances:
                f.write(f"{utterance.utt_id}\t{' '.join(utterance.hypothesis)}\n")
    print(report.summary())
    return 0


def cmd_wer(args: argparse.Namespace, config: RunConfig) -> int:
    refs = _read_utterances(args.ref)
    hyps = _read_utterances(args.hyp)
    hyp_by_id: Dict[str, str] = dict(hyps)
    if len(hyp_by_id) != len(hyps) or {u for u, _ in refs} != set(hyp_by_id):
        raise DataError(f"{args.ref} 与 {args.hyp} 的语句不能一一对应")
    report = EvalReport()
    for utt_id, sentence in refs:
        reference, hypothesis = tuple(sentence.split()), tuple(hyp_by_id[utt_id].split())
        result = wer(reference, hypothesis)
        if result.error:
            get_logger().warning(f"语句 {utt_id} 的参考为空")
        report.utterances.append(UtteranceResult(utt_id, reference, hypothesis, result, result, result))
    print(report.report_line())
    return 0


def cmd_neighbors(args: argparse.Namespace, config: RunConfig) -> int:
    vocab = Vocabulary.load(args.vocab)
    params = load_checkpoint(args.checkpoint)
    if args.word not in vocab:
        raise DataError(f"词不在词表中: {args.word}")
    for wid, distance in nearest_neighbors(params, vocab.lookup(args.word), args.k):
        print(f"{vocab.id_to_word[wid]} {distance:.2f}")
    return 0


def cmd_param_count(args: argparse.Namespace, config: RunConfig) -> int:
    if args.production:
        config = load_production_config()
    vocab_size = Vocabulary.load(args.vocab).size if args.vocab else None
    total = parameter_count(ModelConfig.from_run_config(config, vocab_size))
    print(total)
    deviation = abs(total - PRODUCTION_PARAMETERS) / PRODUCTION_PARAMETERS
    if deviation <= 0.01:
        print("within 1% of 517M")
    else:
        print(f"differs from 517M by {deviation * 100:.2f}%")
    return 0


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    seed = _seed(args, config)
    error = gradient_check(seed=seed, epsilon=args.epsilon)
    print(f"max_relative_error={error:.3e}")
    passed = error < GRADCHECK_TOLERANCE
    print("PASS" if passed else "FAIL")
    return 0 if passed else 1


def cmd_synthetic_eval(args: argparse.Namespace, config: RunConfig) -> int:
    seed = _seed(args, config)
    results = run_recovery(
        seed,
        input_modes=args.modes,
        fs=args.f,
        n_sentences=args.sentences,
        max_steps=args.steps,
    )
    for result in results:
        print(f"mode={result.input_mode} f={result.f} spearman={result.correlation:.4f} steps={result.log.steps}")
    for weight, report in run_rescoring(seed).items():
        print(
            f"weight={weight} first_pass_wer={report.first_pass_wer:.2f} "
            f"oracle_wer={report.oracle_wer:.2f} {report.report_line()}"
        )
    return 0


# ============================== 参数解析 ==============================


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="运行配置文件（key = value）")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="覆盖单个配置项，可重复")
    common.add_argument("--log-dir", type=Path, help=f"日志目录（例如 {PATHS['logs']}），默认不写日志文件")
    common.add_argument("--threads", type=int, help="工作线程数上限，默认取 run.threads")
    common.add_argument("--seed", type=int, help="随机种子，随机化命令必需")
    return common


def build_parser() -> argparse.ArgumentParser:
    """构造命令行解析器"""
    parser = argparse.ArgumentParser(
        prog="nngrams",
        description="NN-grams - 结合 n-gram 计数与神经网络的语言模型工具包",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用示例:
  %(prog)s vocab --corpus train.txt --out vocab.txt
  %(prog)s count --corpus train.txt --vocab vocab.txt --out counts.ngs --show-tree --tree-depth 2
  %(prog)s katz train --counts counts.ngs --vocab vocab.txt --out lm.arpa
  %(prog)s train --corpus train.txt --vocab vocab.txt --counts counts.ngs --out model.ckpt --seed 1
  %(prog)s noise-speech --lattices lattices/ --vocab vocab.txt --out speech.tbl --corpus-out asr.txt
  %(prog)s rescore --testset test.tsv --nbest-dir nbest/ --checkpoint model.ckpt --counts counts.ngs --vocab vocab.txt
  %(prog)s param-count --production                # 生产规模配置的参数量
  %(prog)s gradcheck --seed 7                 # 有限差分梯度校验

退出码:
  0 成功；1 配置或参数校验失败；2 输入数据错误
        """,
    )
    parser.add_argument("--version", action="version", version="NN-grams 0.1.0")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", metavar="<command>")
    sub.required = True

    p = sub.add_parser("vocab", parents=[common], help="从语料构建词表")
    p.add_argument("--corpus", type=Path, required=True, help="训练语料（每行一句，空格分词）")
    p.add_argument("--out", type=Path, required=True, help="输出词表文件")
    p.add_argument("--max-size", type=int, help="词表最大规模（含特殊词）")
    p.add_argument("--min-count", type=int, help="词频下限")
    p.set_defaults(handler=cmd_vocab)

    p = sub.add_parser("count", parents=[common], help="统计 n-gram 计数")
    p.add_argument("--corpus", type=Path, required=True, help="训练语料")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--out", type=Path, required=True, help="输出计数存储")
    p.add_argument("--order", type=int, help="最高阶数，默认取 ngram.max_order")
    p.add_argument("--show-tree", action="store_true", help="打印计数前缀树")
    p.add_argument("--tree-depth", type=int, help="前缀树最大深度")
    p.set_defaults(handler=cmd_count)

    p = sub.add_parser("katz", help="Katz 回退模型：估计、导出、打分")
    katz_sub = p.add_subparsers(dest="katz_command", metavar="<action>")
    katz_sub.required = True
    for action, help_text in (
        ("train", "从计数估计模型，检查归一化并写出 ARPA"),
        ("export", "从计数估计模型并写出 ARPA"),
        ("score", "打印每个句子的自然对数概率"),
    ):
        k = katz_sub.add_parser(action, parents=[common], help=help_text)
        k.add_argument("--vocab", type=Path, required=True, help="词表文件")
        k.add_argument("--order", type=int, help="模型阶数，默认取 ngram.katz_order")
        if action == "score":
            k.add_argument("--counts", type=Path, help="计数存储")
            k.add_argument("--arpa", type=Path, help="ARPA 模型（代替 --counts）")
            k.add_argument("--text", type=Path, required=True, help="待打分的句子文件")
        else:
            k.add_argument("--counts", type=Path, required=True, help="计数存储")
            k.add_argument("--out", type=Path, required=True, help="输出 ARPA 文件")
        k.set_defaults(handler=cmd_katz)

    p = sub.add_parser("noise-text", parents=[common], help="从 Katz 条件分布抽取文本噪声")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--counts", type=Path, help="计数存储")
    p.add_argument("--arpa", type=Path, help="ARPA 模型（代替 --counts）")
    p.add_argument("--history", default="", help="文本顺序的历史，例如 'we want'")
    p.add_argument("--f", type=int, help="噪声样本数，默认取 train.f")
    p.add_argument("--order", type=int, help="Katz 阶数，默认取 ngram.katz_order")
    p.set_defaults(handler=cmd_noise_text)

    p = sub.add_parser("pinch", parents=[common], help="把词格夹紧到 1-best 并打印混淆集合")
    p.add_argument("--lattice", type=Path, required=True, help="词格文件")
    p.set_defaults(handler=cmd_pinch)

    p = sub.add_parser("noise-speech", parents=[common], help="从词格目录构建语音噪声表")
    p.add_argument("--lattices", type=Path, required=True, help="词格目录（*.lat，文件名即语句 id）")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--out", type=Path, required=True, help="输出语音噪声表")
    p.add_argument("--corpus-out", type=Path, help="输出高置信度 1-best 语料（<utt_id>\\t<句子>）")
    p.add_argument("--threshold", type=float, help="置信度阈值，默认取 noise.confidence_threshold")
    p.set_defaults(handler=cmd_noise_speech)

    p = sub.add_parser("nbest", parents=[common], help="从词格提取 n-best")
    p.add_argument("--lattice", type=Path, required=True, help="词格文件")
    p.add_argument("--n", type=int, help="假设数，默认取 rescore.n")
    p.add_argument("--out", type=Path, help="输出 n-best 文件，缺省时打印")
    p.set_defaults(handler=cmd_nbest)

    p = sub.add_parser("train", parents=[common], help="用 NCE 训练 NN-grams")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--counts", type=Path, required=True, help="计数存储")
    p.add_argument("--out", type=Path, required=True, help="输出检查点")
    p.add_argument("--corpus", type=Path, help="训练语料（文本噪声）")
    p.add_argument("--heldout", type=Path, help="验证语料（文本噪声）")
    p.add_argument("--noise", choices=("text", "speech"), help="噪声类型，默认取 train.noise")
    p.add_argument("--arpa", type=Path, help="作为文本噪声分布的 ARPA 模型")
    p.add_argument("--katz-order", type=int, help="文本噪声的 Katz 阶数")
    p.add_argument("--speech-table", type=Path, help="语音噪声表")
    p.add_argument("--speech-corpus", type=Path, help="与噪声表对应的 1-best 语料（<utt_id>\\t<句子>）")
    p.add_argument("--log", type=Path, help="训练日志文件（追加写入）")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("score", parents=[common], help="用 NN-grams 给句子打分")
    p.add_argument("--checkpoint", type=Path, required=True, help="模型检查点")
    p.add_argument("--counts", type=Path, help="计数存储（embeddings_only 模式可省略）")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--text", type=Path, required=True, help="待打分的句子文件")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("rescore", parents=[common], help="N-best 重打分并计算 WER")
    p.add_argument("--testset", type=Path, required=True, help="测试集（<utt_id>\\t<参考>）")
    p.add_argument("--nbest-dir", type=Path, required=True, help="n-best 目录（<utt_id>.nbest）")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--model", choices=("nngrams", "katz6"), help="重打分模型，默认取 rescore.model")
    p.add_argument("--checkpoint", type=Path, help="NN-grams 检查点")
    p.add_argument("--counts", type=Path, help="计数存储")
    p.add_argument("--arpa", type=Path, help="katz6 使用的 ARPA 模型")
    p.add_argument("--katz-order", type=int, help=f"katz6 的阶数，默认 {KATZ6_ORDER}")
    p.add_argument("--weight", type=float, help="插值权重 λ")
    p.add_argument("--n", type=int, help="每句使用的假设数")
    p.add_argument("--out", type=Path, help="输出每句的最终假设")
    p.set_defaults(handler=cmd_rescore)

    p = sub.add_parser("wer", parents=[common], help="计算语料级 WER")
    p.add_argument("--ref", type=Path, required=True, help="参考文件")
    p.add_argument("--hyp", type=Path, required=True, help="假设文件")
    p.set_defaults(handler=cmd_wer)

    p = sub.add_parser("neighbors", parents=[common], help="词向量最近邻")
    p.add_argument("--checkpoint", type=Path, required=True, help="模型检查点")
    p.add_argument("--vocab", type=Path, required=True, help="词表文件")
    p.add_argument("--word", required=True, help="查询词")
    p.add_argument("--k", type=int, default=5, help="近邻个数（默认 5）")
    p.set_defaults(handler=cmd_neighbors)

    p = sub.add_parser("param-count", parents=[common], help="统计网络参数量")
    p.add_argument("--vocab", type=Path, help="词表文件（model.vocab_size 为 0 时使用）")
    p.add_argument("--production", action="store_true", help="使用随包发布的生产规模配置")
    p.set_defaults(handler=cmd_param_count)

    p = sub.add_parser("gradcheck", parents=[common], help="有限差分梯度校验")
    p.add_argument("--epsilon", type=float, default=1e-5, help="差分步长（默认 1e-5）")
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("synthetic-eval", parents=[common], help="合成二元数据上的分布恢复与重打分实验")
    p.add_argument("--modes", nargs="+", default=["counts_only", "full"], help="输入模式")
    p.add_argument("--f", nargs="+", type=int, default=[1, 25], help="噪声样本数")
    p.add_argument("--sentences", type=int, default=200_000, help="采样句子数")
    p.add_argument("--steps", type=int, default=1500, help="每次训练的步数上限")
    p.set_defaults(handler=cmd_synthetic_eval)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    执行一个子命令

    Args:
        argv: 命令行参数，None 表示 sys.argv[1:]

    Returns:
        退出码：0 成功，1 配置或参数错误，2 数据错误
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1

    logger = get_logger(run_name=args.command, log_dir=args.log_dir)
    try:
        config = load_run_config(args.config, args.set)
        code = args.handler(args, config)
        logger.print_summary()
        return code
    except KeyboardInterrupt:
        print("\n\n程序被用户中断", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        logger.error(f"数据错误: {e}", console=True)
        return 2
    except (NNGramsError, ValueError) as e:
        logger.error(f"{e}", console=True)
        return 1


def main() -> None:
    """
    主程序入口
    """
    sys.exit(run())


if __name__ == "__main__":
    main()
