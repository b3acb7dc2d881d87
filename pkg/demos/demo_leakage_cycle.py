"""Two screens that catch cheating latents: scene cuts and cycle transfer.

A latent action is supposed to describe the *change* between two frames,
not smuggle in the next frame wholesale.  Two checks expose smuggling:

  leakage  — stitch the first half of clip A onto the second half of clip B
             and infer a latent across the impossible boundary.  An honest
             latent cannot contain the new scene, so the one-step error must
             spike relative to the unstitched clip.

  cycle    — infer latents on A, apply them to B, re-infer latents from the
             model's own B rollout, then apply those back to A.  Latents
             that transfer as actions survive the round trip with little
             extra error.

Trains one sparsity-regularized bundle (~20s) and runs both screens.

Run:  python3 demos/demo_leakage_cycle.py
"""

from lamward.encoder import EncoderCfg, FrozenEncoder
from lamward.evalsuite import eval_cycle, eval_leakage
from lamward.model import ModelBundle
from lamward.regularizers import RegularizerCfg
from lamward.rng import Rng
from lamward.train import TrainCfg, train
from lamward.worldgen import WorldCfg, generate_dataset


def main():
    world = WorldCfg()
    train_eps = generate_dataset(world, seed=1, count=96)
    eval_eps = generate_dataset(world, seed=2, count=48)
    enc = FrozenEncoder(EncoderCfg(), world.grid)

    bundle = ModelBundle(enc, RegularizerCfg(kind="sparse", l1_weight=0.4), seed=3)
    print("training a sparse bundle (800 steps)...")
    train(bundle, enc.encode_dataset(train_eps), TrainCfg(steps=800, batch_size=32, seed=5))

    leak = eval_leakage(bundle, eval_eps, n_pairs=48, rng=Rng(11))
    row = leak.rows[0]
    print(f"\nleakage, cut at frame {leak.params['cut']}, {row['n_pairs']} stitched pairs:")
    print(f"  error on the real transition      {row['err_original']:.4f}")
    print(f"  error across the impossible cut   {row['err_stitched']:.4f}")
    print(f"  ratio {row['ratio']:.2f}  (> 1.5 means latents are not carrying the scene)")

    cyc = eval_cycle(bundle, eval_eps, n_pairs=48, rng=Rng(12))
    row = cyc.rows[0]
    print(f"\ncycle transfer, {row['n_pairs']} A/B pairs:")
    print(f"  rollout error with A's own latents        {row['err_direct']:.4f}")
    print(f"  after the A -> B -> A latent round trip   {row['err_cycle']:.4f}")
    print(f"  ratio {row['ratio']:.2f}  (close to 1.0 means latents transfer as actions)")

    print("\npassing both at once is the point: a model can ace the cycle by "
          "copying pixels through the latent, but then the cut catches it.")


if __name__ == "__main__":
    main()
