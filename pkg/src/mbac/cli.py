"""Command-line entry point: ``python -m mbac <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from . import checkpoint as ckpt_io
from .config import ConfigError, RunConfig, load_config_file
from .corpus import CorpusError, tokenize, write_synthetic_corpus
from .env import N_ACTIONS, SPEECH, Observation, reward_oracle
from .gradcheck import run_gradcheck
from .harness import agent_from_checkpoint, detach_lite, evaluate, train
from .planner import greedy_action, sample_action

_HELP = {
    "algorithm": "mbac or a2c",
    "preset": "network size preset: desk or paper",
    "corpus": "UTF-8 text file, one sentence per line (required)",
    "seed": "master seed for the environment, init and action streams",
    "interactions": "interaction budget; 0 uses the preset's budget",
    "gamma": "discount rate",
    "beta": "entropy bonus weight",
    "lr_model": "model learning rate",
    "lr_actor": "actor (and shared trunk, state updater) learning rate",
    "lr_critic": "critic head learning rate",
    "clip_norm": "global gradient norm limit per component",
    "temperature": "planner softmax temperature",
    "embedding": "hash or file",
    "embedding_file": "token vectors file for embedding=file",
    "max_sentences": "read at most this many corpus lines; 0 reads all",
    "joint_state_training": "also backpropagate the model loss into the state updater",
    "dtype": "float32 or float64 training arithmetic",
    "output": "run directory for checkpoint, metrics and summary",
    "eval_split": "split used by eval (train or test)",
    "eval_greedy": "act greedily in eval",
    "eval_episodes": "episodes per eval",
    "eval_policy": "actor or planner",
    "checkpoint_every": "also write numbered checkpoints every N interactions",
    "trace": "write a per-step trace.log",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(p):
    for f in dataclasses.fields(RunConfig):
        kind = f.type if isinstance(f.type, type) else type(f.default)
        conv = _bool if kind is bool else kind
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=conv, default=None,
                       metavar=f.name.upper(), help=f"{_HELP.get(f.name, '')} (default: {f.default!r})")


def build_parser():
    parser = _Parser(prog="mbac", description="Model-based actor-critic on a simulated voice-editing task.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train an MBAC or A2C agent")
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue a run from its checkpoint")
    p.add_argument("--progress-every", type=int, default=0, help="log every N interactions")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint without learning")
    p.add_argument("checkpoint")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--policy", choices=("actor", "planner"), default="actor")
    p.add_argument("--greedy", action="store_true", help="take the most likely action")
    p.add_argument("--seed", type=int, default=None, help="evaluation seed (default: the run's seed)")
    p.add_argument("--corpus", default=None, help="override the corpus path stored in the checkpoint")

    p = sub.add_parser("distill", help="drop the model from an MBAC checkpoint (MBAC-lite)")
    p.add_argument("checkpoint")
    p.add_argument("output")

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and loss")
    p.add_argument("--preset", default="desk", choices=("desk", "paper"))
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--samples", type=int, default=150, help="coordinates sampled per check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of layer seeds")

    p = sub.add_parser("oracle", help="print the reward table for intents 1..N")
    p.add_argument("--max-intent", type=int, default=14)
    p.add_argument("--m", type=int, default=1, help="the 'No' count used for undershoots")

    p = sub.add_parser("demo", help="edit your own sentence with a trained agent")
    p.add_argument("checkpoint")
    p.add_argument("--policy", choices=("actor", "planner"), default="actor")
    p.add_argument("--sample", action="store_true", help="sample actions instead of acting greedily")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth-corpus", help="write a synthetic grammar corpus")
    p.add_argument("path")
    p.add_argument("--sentences", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args):
    base = load_config_file(args.config) if args.config else RunConfig()
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
                 if getattr(args, f.name) is not None}
    return base.replace(**overrides).validate()


def _print_items(items, out):
    for k, v in items.items():
        out.write(f"{k}={v}\n")


def cmd_train(args, out):
    config = _config_from_args(args)
    result = train(config, resume=args.resume, progress_every=args.progress_every)
    out.write(f"checkpoint={result.checkpoint_path}\nmetrics={result.metrics_path}\n")
    _print_items(result.summary, out)
    return 0


def cmd_eval(args, out):
    summary = evaluate(args.checkpoint, args.split, args.episodes, args.policy, args.greedy,
                       args.seed, args.corpus)
    _print_items(summary.as_dict(), out)
    return 0


def cmd_distill(args, out):
    lite = detach_lite(ckpt_io.load(args.checkpoint))
    ckpt_io.save(lite, args.output)
    out.write(f"wrote {args.output} ({len(lite.arrays)} arrays)\n")
    return 0


def cmd_gradcheck(args, out):
    ok = True
    for name, report in run_gradcheck(args.preset, args.tolerance, args.samples, args.seed, args.seeds):
        status = "ok" if report.passed else "FAIL"
        out.write(f"{status:4s} {name:40s} max_rel_err={report.max_rel_error:.3e} n={report.n_checked}\n")
        ok &= report.passed
    return 0 if ok else 1


def cmd_oracle(args, out):
    if not 1 <= args.max_intent <= 14:
        raise ValueError("--max-intent must lie in [1, 14]")
    out.write("intent\t" + "\t".join(f"a{a}" for a in range(1, N_ACTIONS + 1)) + "\n")
    for k in range(1, args.max_intent + 1):
        row = [reward_oracle(k, a, args.m)[0] for a in range(1, N_ACTIONS + 1)]
        out.write(f"{k}\t" + "\t".join(str(r) for r in row) + "\n")
    return 0


def cmd_demo(args, inp, out):
    """Type a sentence, then 'no' to ask for a correction; answer 'no' or 'ok' after each edit."""
    agent = agent_from_checkpoint(ckpt_io.load(args.checkpoint))
    rng = np.random.default_rng(args.seed)
    out.write("Type a sentence (empty line quits).\n")
    while True:
        out.write("> ")
        out.flush()
        line = inp.readline()
        if not line or not line.strip():
            return 0
        words = tuple(tokenize(line))
        if len(words) < 2:
            out.write("need at least two words\n")
            continue
        out.write(f"display: {' '.join(words)}\nsay 'no' to start a correction, anything else to skip\n")
        if inp.readline().strip().lower() != "no":
            continue
        state, _ = agent.update_state(agent.initial_state(), None, 0.0, Observation(words, SPEECH))
        m = 1
        while words:
            if args.policy == "planner":
                planned = agent.plan(state)
                probs, scores = planned.probs, planned.returns
            else:
                probs, _ = agent.policy(state)
                scores = probs
            action = sample_action(probs, rng) if args.sample else greedy_action(scores)
            words = words[:max(0, len(words) - action)]
            out.write(f"agent deletes {action}: {' '.join(words) or '(empty)'}\n'no' or 'ok'? ")
            out.flush()
            answer = inp.readline().strip().lower()
            if answer != "no":
                out.write("done\n")
                break
            state, _ = agent.update_state(state, action, float(-m), Observation(words, SPEECH))
            m += 1


def cmd_synth(args, out):
    write_synthetic_corpus(args.path, args.sentences, args.seed)
    out.write(f"wrote {args.sentences} sentences to {args.path}\n")
    return 0


def main(argv=None, stdin=None, stdout=None):
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"train": cmd_train, "eval": cmd_eval, "distill": cmd_distill, "gradcheck": cmd_gradcheck,
                "oracle": cmd_oracle, "synth-corpus": cmd_synth}
    try:
        if args.command == "demo":
            return cmd_demo(args, stdin, stdout) or 0
        return handlers[args.command](args, stdout)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"mbac {args.command}: configuration error: {exc}\n")
        return 2
    except (CorpusError, ckpt_io.CheckpointError, ValueError, RuntimeError, OSError) as exc:
        sys.stderr.write(f"mbac {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
