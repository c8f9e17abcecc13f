"""
cli.py

Command-line entry point (`python -m broncholoc <command>`). One subcommand
per pipeline stage:

    quantize         frames -> k-level frames
    detect           per-frame lumen count (+ optional overlay PNGs)
    localize         online gated Bayes filter, posterior per frame
    evaluate         Top-k accuracy and confusion matrix of a posterior file
    simulate         synthetic sequence directory
    viterbi          offline HMM path over a likelihood file
    train-centroids  nearest-centroid frame classifier
    ablate           method-variant report over one or more sequences

Defaults < --config JSON < explicit flags. Every command returns 0 on
success and 1 after logging the error.

"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from . import config as cfg
from .bayes_filter import GatePolicy
from .branch_detector import DetectorParams, detect_branch, render_overlay
from .errors import ConfigError, LikelihoodError, LocalizationError
from .evaluation import (PosteriorWriter, confusion_matrix, format_report,
                         plot_confusion_matrix, read_posterior_file,
                         read_truth_file, result_from_path,
                         result_from_posteriors, result_from_scores,
                         topk_accuracy, write_report_csv)
from .frames import frame_name, iter_frames, list_frames, write_frame
from .imaging import quantize_levels
from .likelihood import (CentroidLikelihoodProvider, FileLikelihoodProvider,
                         load_likelihood_file, save_centroid_model,
                         train_centroids)
from .pipeline import (CLASSIFIERS, FILE_CLASSIFIER, localize_stream,
                       run_ablation)
from .synthgen import (DEFAULT_BRANCH_NOISE_SCALE, DEFAULT_NOISE_MODEL,
                       DEFAULT_FRAMES_PER_NODE, DEFAULT_FRAMES_PER_TRANSITION,
                       DEFAULT_SIZE, NOISE_MODELS, generate_sequence,
                       parse_walk, read_sequence_dir, write_sequence)
from .tables import format_float, write_rows
from .tree_model import (default_tree, load_tree_file, random_descending_walk,
                         transition_matrix, walk_labels)
from .viterbi_offline import max_marginals, viterbi_decode

logger = logging.getLogger('broncholoc.cli')

POSTERIOR_FILE = 'posteriors.csv'
TOPK_FILE = 'topk.csv'
DETECTION_FILE = 'detections.csv'
OVERLAY_DIR = 'overlays'
EVALUATION_FILE = 'evaluation.csv'
CONFUSION_FILE = 'confusion.csv'
CONFUSION_PLOT = 'confusion.png'
PATH_FILE = 'path.txt'
VITERBI_TOPK_FILE = 'viterbi_topk.csv'
CENTROID_FILE = 'centroids.txt'
ABLATION_FILE = 'ablation.csv'


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _run_config(args) -> cfg.RunConfig:
    base = cfg.load_run_config(args.config) if args.config else cfg.RunConfig()
    return base.merged(
        tree_path=args.tree,
        frames_dir=getattr(args, 'frames', None),
        likelihoods_path=getattr(args, 'likelihoods', None),
        centroid_model_path=getattr(args, 'centroid_model', None),
        out_dir=args.out,
        gate=getattr(args, 'gate', None),
        alpha=getattr(args, 'alpha', None),
        m=getattr(args, 'm', None),
        levels=getattr(args, 'levels', None),
        percentile=getattr(args, 'percentile', None),
        area_fraction=getattr(args, 'area_frac', None),
        connectivity=getattr(args, 'connectivity', None),
        min_lumens=getattr(args, 'min_lumens', None),
        topk=getattr(args, 'topk', None),
        seed=getattr(args, 'seed', None))


def _load_tree(run: cfg.RunConfig):
    path = run.tree_path or cfg.default_tree_path()
    if path is None:
        return default_tree()
    if not Path(path).exists():
        raise ConfigError(ConfigError.MISSING_PATH, 'tree {0}'.format(path))
    return load_tree_file(path)


def _detector_params(run: cfg.RunConfig) -> DetectorParams:
    return DetectorParams(percentile=run.percentile,
                          area_fraction=run.area_fraction,
                          connectivity=run.connectivity,
                          min_lumens_for_branch=run.min_lumens)


def _out_dir(run: cfg.RunConfig) -> Path:
    out = Path(run.out_dir) if run.out_dir else Path('.')
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(run: cfg.RunConfig, name: str) -> Path:
    value = getattr(run, name)
    if value is None:
        raise ConfigError(ConfigError.BAD_VALUE, '{0} is required'.format(name))
    if not Path(value).exists():
        raise ConfigError(ConfigError.MISSING_PATH, '{0}={1}'.format(name, value))
    return Path(value)


def _check_topk(topk, n: int) -> None:
    if not topk or any(k < 1 or k > n for k in topk):
        raise ConfigError(ConfigError.BAD_VALUE,
                          'topk={0} with n={1}'.format(list(topk), n))


def _write_topk_csv(path, tree, scores, topk) -> None:
    """Per-frame ranked labels and scores for the largest requested k."""
    k = max(topk)
    header = ['frame'] + ['top{0}'.format(r) for r in range(1, k + 1)] + \
        ['score{0}'.format(r) for r in range(1, k + 1)]
    order = np.argsort(-np.asarray(scores), axis=1, kind='stable')[:, :k]
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        write_rows(handle, header, (
            [t] + [tree.nodes[i] for i in row] +
            [format_float(scores[t][i]) for i in row]
            for t, row in enumerate(order)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_quantize(args) -> int:
    run = _run_config(args)
    frames_dir = _require(run, 'frames_dir')
    out = _out_dir(run)
    count = 0
    for t, path, gray in iter_frames(frames_dir):
        quantized = quantize_levels(gray, run.levels)
        write_frame(out / path.name, quantized.base)
        logger.debug('%s -> levels %s', path.name, quantized.levels)
        count += 1
    logger.info('quantized %d frames to %d levels into %s', count,
                run.levels, out)
    return 0


def cmd_detect(args) -> int:
    run = _run_config(args)
    frames_dir = _require(run, 'frames_dir')
    params = _detector_params(run)
    out = _out_dir(run)
    overlay_dir = out / OVERLAY_DIR
    if args.overlays:
        overlay_dir.mkdir(parents=True, exist_ok=True)
    branch_frames = 0
    with open(out / DETECTION_FILE, 'w', encoding='utf-8', newline='') as handle:
        header = ['frame', 'file', 'intensity_threshold', 'lumens',
                  'is_branch']
        rows = []
        for t, path, gray in iter_frames(frames_dir):
            detection = detect_branch(gray, params)
            rows.append([t, path.name, detection.intensity_threshold,
                         detection.lumen_count, int(detection.is_branch)])
            branch_frames += int(detection.is_branch)
            logger.info('%s: %d lumen(s)%s', path.name, detection.lumen_count,
                        ' [branch]' if detection.is_branch else '')
            if args.overlays:
                panel = render_overlay(gray, detection)
                Image.fromarray(panel).save(
                    str(overlay_dir / frame_name(t, ext='png')))
        write_rows(handle, header, rows)
    logger.info('%d of %d frames at a branching point', branch_frames,
                len(rows))
    return 0


def cmd_localize(args) -> int:
    run = _run_config(args)
    tree = _load_tree(run)
    run.validate(tree.n)
    frames_dir = _require(run, 'frames_dir')
    policy = GatePolicy.parse(run.gate)
    transition = transition_matrix(tree, run.alpha, run.m)
    n_frames = len(list_frames(frames_dir))
    if run.likelihoods_path is not None:
        provider = FileLikelihoodProvider.from_file(run.likelihoods_path, tree)
        if len(provider) != n_frames:
            raise LikelihoodError(LikelihoodError.FRAME_COUNT,
                                  '{0} rows for {1} frames'.format(
                                      len(provider), n_frames))
    else:
        provider = CentroidLikelihoodProvider.from_file(
            run.centroid_model_path, tree)
    out = _out_dir(run)
    frames = (gray for _, _, gray in iter_frames(frames_dir))
    posteriors = []
    with open(out / POSTERIOR_FILE, 'w', encoding='utf-8',
              newline='\n') as handle:
        writer = PosteriorWriter(handle, tree.nodes)
        for step in localize_stream(frames, provider, tree, transition,
                                    policy, _detector_params(run), run.levels,
                                    debug=args.debug):
            writer.write(step.t, step.posterior.probs)
            posteriors.append(step.posterior.probs)
            logger.debug('frame %d: %s (%.3f)%s', step.t,
                         tree.nodes[step.posterior.argmax()],
                         step.posterior.probs.max(),
                         ' updated' if step.updated else '')
    posteriors = np.asarray(posteriors)
    _write_topk_csv(out / TOPK_FILE, tree, posteriors, run.topk)
    logger.info('localized %d frames (gate=%s) -> %s', len(posteriors),
                policy.value, out / POSTERIOR_FILE)
    if args.truth:
        result = result_from_posteriors(posteriors,
                                        read_truth_file(args.truth, tree))
        for k in run.topk:
            logger.info('Top-%d accuracy: %.4f', k, topk_accuracy(result, k))
    return 0


def cmd_evaluate(args) -> int:
    run = _run_config(args)
    tree = _load_tree(run)
    _check_topk(run.topk, tree.n)
    labels, _, posteriors = read_posterior_file(args.posteriors)
    if sorted(labels) != sorted(tree.nodes):
        raise ConfigError(ConfigError.BAD_VALUE,
                          'posterior labels {0}'.format(labels))
    posteriors = posteriors[:, [labels.index(label) for label in tree.nodes]]
    result = result_from_posteriors(posteriors,
                                    read_truth_file(args.truth, tree))
    out = _out_dir(run)
    with open(out / EVALUATION_FILE, 'w', encoding='utf-8',
              newline='') as handle:
        write_rows(handle, ['k', 'accuracy'],
                   ([k, format_float(topk_accuracy(result, k))]
                    for k in run.topk))
    for k in run.topk:
        logger.info('Top-%d accuracy: %.4f', k, topk_accuracy(result, k))
    matrix = confusion_matrix(result)
    with open(out / CONFUSION_FILE, 'w', encoding='utf-8',
              newline='') as handle:
        write_rows(handle, ['true'] + list(tree.nodes),
                   ([label] + [int(v) for v in row]
                    for label, row in zip(tree.nodes, matrix)))
    if args.plot:
        plot_confusion_matrix(matrix, tree.nodes, out / CONFUSION_PLOT)
    return 0


def _walk_from_args(args, tree, rng) -> List[int]:
    if args.walk:
        return parse_walk(tree, args.walk)
    return random_descending_walk(tree, args.depth, rng)


def cmd_simulate(args) -> int:
    run = _run_config(args)
    tree = _load_tree(run)
    rng = np.random.default_rng(run.seed)
    walk = _walk_from_args(args, tree, rng)
    seq = generate_sequence(
        tree, walk, frames_per_node=args.frames_per_node,
        frames_per_transition=args.frames_per_transition, noise=args.noise,
        seed=run.seed, size=args.size, noise_model=args.noise_model,
        branch_noise_scale=args.branch_noise_scale)
    write_sequence(seq, tree, _out_dir(run))
    logger.info('walk %s: %d frames', ' -> '.join(walk_labels(tree, walk)),
                len(seq))
    return 0


def cmd_viterbi(args) -> int:
    run = _run_config(args)
    tree = _load_tree(run)
    _check_topk(run.topk, tree.n)
    path = _require(run, 'likelihoods_path')
    transition = transition_matrix(tree, run.alpha, run.m)
    vectors = load_likelihood_file(path, tree)
    constrained = not args.unconstrained
    decoded = viterbi_decode(vectors, transition, constrained, tree.root_index)
    out = _out_dir(run)
    with open(out / PATH_FILE, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write('\n'.join(decoded.labels(tree)) + '\n')
    scores = max_marginals(vectors, transition, tree.root_index, constrained)
    _write_topk_csv(out / VITERBI_TOPK_FILE, tree, scores, run.topk)
    logger.info('decoded %d frames, log score %s', len(decoded.states),
                format_float(decoded.log_score))
    if args.truth:
        truth = read_truth_file(args.truth, tree)
        path_result = result_from_path(decoded.states, truth, tree.n)
        ranked = result_from_scores(scores, truth)
        logger.info('path Top-1 accuracy: %.4f', topk_accuracy(path_result, 1))
        for k in run.topk:
            logger.info('Top-%d accuracy: %.4f', k, topk_accuracy(ranked, k))
    return 0


def cmd_train_centroids(args) -> int:
    run = _run_config(args)
    tree = _load_tree(run)
    frames_dir = _require(run, 'frames_dir')
    truth = read_truth_file(args.truth, tree)
    paths = list_frames(frames_dir)
    if len(truth) != len(paths):
        raise LikelihoodError(LikelihoodError.FRAME_COUNT,
                              '{0} labels for {1} frames'.format(
                                  len(truth), len(paths)))
    pairs = ((quantize_levels(gray, run.levels), truth[t])
             for t, _, gray in iter_frames(frames_dir))
    model = train_centroids(pairs, tree, thumb_size=args.thumb_size,
                            temperature=args.temperature)
    target = _out_dir(run) / CENTROID_FILE
    save_centroid_model(model, target)
    logger.info('centroid model (%d classes) written to %s',
                sum(model.present), target)
    return 0


def cmd_ablate(args) -> int:
    run = _run_config(args)
    tree = _load_tree(run)
    transition = transition_matrix(tree, run.alpha, run.m)
    sequences = [(Path(p).name, read_sequence_dir(p, tree))
                 for p in args.sequences]
    rng = np.random.default_rng(run.seed)
    for i in range(args.simulate):
        walk = _walk_from_args(args, tree, rng)
        seq = generate_sequence(
            tree, walk, frames_per_node=args.frames_per_node,
            frames_per_transition=args.frames_per_transition,
            noise=args.noise, seed=run.seed + i, size=args.size,
            noise_model=args.noise_model,
            branch_noise_scale=args.branch_noise_scale)
        sequences.append(('sim{0}'.format(i), seq))
    if not sequences:
        raise ConfigError(ConfigError.BAD_VALUE,
                          'no sequences (give directories or --simulate N)')
    rows = run_ablation(sequences, tree, transition, _detector_params(run),
                        constrain_endpoints=not args.unconstrained,
                        workers=args.workers,
                        classifiers=args.classifier or (FILE_CLASSIFIER,),
                        levels=run.levels, thumb_size=args.thumb_size,
                        temperature=args.temperature)
    out = _out_dir(run)
    write_report_csv(rows, out / ABLATION_FILE)
    print(format_report(rows))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _topk_arg(text: str):
    return tuple(int(k) for k in text.replace(',', ' ').split())


def _add_common(p) -> None:
    p.add_argument('--config', help='run config JSON (see runs/)')
    p.add_argument('--tree', help='tree spec file (default: $%s or the '
                   'bundled 15-node model)' % cfg.TREE_ENV_VAR)
    p.add_argument('--out', help='output directory (default: .)')
    p.add_argument('--seed', type=int)
    p.add_argument('--debug', action='store_true',
                   help='write %s in the output directory' %
                   cfg.DEBUG_LOG_NAME)
    p.add_argument('--quiet', action='store_true')


def _add_detector(p) -> None:
    p.add_argument('--percentile', type=float,
                   help='darkest-pixel percentile (default %g)' %
                   cfg.DEFAULT_PERCENTILE)
    p.add_argument('--area-frac', type=float,
                   help='minimum lumen area fraction (default %g)' %
                   cfg.DEFAULT_AREA_FRACTION)
    p.add_argument('--connectivity', type=int, choices=(4, 8))
    p.add_argument('--min-lumens', type=int,
                   help='lumens needed for a branching point (default %d)' %
                   cfg.DEFAULT_MIN_LUMENS)


def _add_prior(p) -> None:
    p.add_argument('--alpha', type=float,
                   help='transition penalty (default %g)' % cfg.DEFAULT_ALPHA)
    p.add_argument('--m', type=int,
                   help='unpenalized hop distance (default %d)' %
                   cfg.DEFAULT_M)
    p.add_argument('--topk', type=_topk_arg, help='e.g. "1,3"')


def _add_synthesis(p) -> None:
    p.add_argument('--walk', help='node labels, e.g. TRA,RMB,BronInt')
    p.add_argument('--depth', type=int, default=3,
                   help='random descending walk depth when --walk is absent')
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--noise-model', choices=NOISE_MODELS,
                   default=DEFAULT_NOISE_MODEL)
    p.add_argument('--branch-noise-scale', type=float,
                   default=DEFAULT_BRANCH_NOISE_SCALE)
    p.add_argument('--frames-per-node', type=int,
                   default=DEFAULT_FRAMES_PER_NODE)
    p.add_argument('--frames-per-transition', type=int,
                   default=DEFAULT_FRAMES_PER_TRANSITION)
    p.add_argument('--size', type=int, default=DEFAULT_SIZE)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='broncholoc',
        description='Online topological localization of a bronchoscope')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('quantize', help='k-level gray quantization')
    _add_common(p)
    p.add_argument('--frames', help='input frame directory')
    p.add_argument('--levels', type=int)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser('detect', help='branching-point detector')
    _add_common(p)
    _add_detector(p)
    p.add_argument('--frames')
    p.add_argument('--overlays', action='store_true',
                   help='write a PNG overlay per frame')
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser('localize', help='online gated Bayes filter')
    _add_common(p)
    _add_detector(p)
    _add_prior(p)
    p.add_argument('--levels', type=int,
                   help='gray levels fed to the classifier (default %d)' %
                   cfg.DEFAULT_LEVELS)
    p.add_argument('--frames')
    source = p.add_mutually_exclusive_group()
    source.add_argument('--likelihoods', help='likelihood CSV')
    source.add_argument('--centroid-model', help='centroid model file')
    p.add_argument('--gate', choices=[g.value for g in GatePolicy])
    p.add_argument('--truth', help='truth labels; logs Top-k accuracy')
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser('evaluate', help='score a posterior file')
    _add_common(p)
    p.add_argument('--posteriors', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--topk', type=_topk_arg)
    p.add_argument('--plot', action='store_true',
                   help='also write %s' % CONFUSION_PLOT)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('simulate', help='write a synthetic sequence')
    _add_common(p)
    _add_synthesis(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('viterbi', help='offline HMM decode')
    _add_common(p)
    _add_prior(p)
    p.add_argument('--likelihoods')
    p.add_argument('--unconstrained', action='store_true',
                   help='do not force the path to end at the root')
    p.add_argument('--truth')
    p.set_defaults(func=cmd_viterbi)

    p = sub.add_parser('train-centroids', help='nearest-centroid classifier')
    _add_common(p)
    p.add_argument('--frames')
    p.add_argument('--truth', required=True)
    p.add_argument('--levels', type=int)
    p.add_argument('--thumb-size', type=int, default=cfg.DEFAULT_THUMB_SIZE)
    p.add_argument('--temperature', type=float,
                   default=cfg.DEFAULT_TEMPERATURE)
    p.set_defaults(func=cmd_train_centroids)

    p = sub.add_parser('ablate', help='method-variant report')
    _add_common(p)
    _add_detector(p)
    _add_prior(p)
    _add_synthesis(p)
    p.add_argument('sequences', nargs='*', help='sequence directories')
    p.add_argument('--simulate', type=int, default=0, metavar='N',
                   help='add N simulated sequences')
    p.add_argument('--unconstrained', action='store_true')
    p.add_argument('--classifier', action='append', choices=CLASSIFIERS,
                   help='frame classifier source, repeatable: stored '
                   'likelihoods (file) or the held-out centroid baseline '
                   'on raw gray (raw-gray) or on the k-level image '
                   '(quantized); default file')
    p.add_argument('--levels', type=int)
    p.add_argument('--thumb-size', type=int, default=cfg.DEFAULT_THUMB_SIZE)
    p.add_argument('--temperature', type=float,
                   default=cfg.DEFAULT_TEMPERATURE)
    p.add_argument('--workers', type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    return parser


def _setup_logging(args) -> Optional[logging.Handler]:
    level = logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(message)s')
    for hdlr in logging.getLogger().handlers:
        hdlr.setLevel(level)
    logging.getLogger('broncholoc').setLevel(level)
    if args.debug:
        return cfg.init_debug_logging(args.out or '.')
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    package_logger = logging.getLogger('broncholoc')
    previous_level = package_logger.level
    handler = _setup_logging(args)
    try:
        return args.func(args)
    except (LocalizationError, OSError) as exc:
        logger.error('ERROR: %s', exc)
        return 1
    finally:
        if handler is not None:
            cfg.close_debug_logging(handler, previous_level)
        else:
            package_logger.setLevel(previous_level)


if __name__ == '__main__':
    sys.exit(main())
