"""Two-phase training demo: skip-retain until the controller fires, then
vanilla updates until the model memorizes a tiny corpus.

Prints the phase transition step and the evaluation trace so the handoff
is visible in the loss curve.
"""

import argparse

from memxl import MemoryLM, ModelConfig, RngHub, SkipSchedule, TrainConfig, train
from memxl.data import load_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("corpus", help="text file to memorize")
    parser.add_argument("--steps", type=int, default=700)
    parser.add_argument("--seed", type=int, default=5)
    args = parser.parse_args()

    corpus = load_corpus(args.corpus, "char")
    mcfg = ModelConfig(
        n_layers=4, d_model=32, d_inner=64, n_heads=2, d_head=16,
        mem_len=16, block_len=16, vocab_size=corpus.vocab.size,
        beta=0.1, init_std=0.05,
    )
    tcfg = TrainConfig(
        steps=args.steps, base_lr=3e-3, cosine_max_iters=12 * args.steps,
        schedule=SkipSchedule.linear(), eval_interval=25,
        eval_context=32, eval_block=16, window=200, threshold=0.2,
        seed=args.seed,
    )

    hub = RngHub(tcfg.seed)
    model = MemoryLM(mcfg, hub["init"])
    trainer = train(model, corpus.ids, tcfg, hub, eval_ids=corpus.ids[:400])

    for row in trainer.log:
        if row.eval_ppl is not None:
            print(f"step {row.step:4d}  {row.phase:12s}  train nll {row.train_nll:.4f}  eval ppl {row.eval_ppl:.3f}")
    ts = trainer.controller.transition_step
    print(f"\nswitched to vanilla updates at step {ts}")
    print(f"final train nll: {trainer.log[-1].train_nll:.5f}")


if __name__ == "__main__":
    main()
