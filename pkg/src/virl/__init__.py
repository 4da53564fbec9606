"""
virl: visual imitation with a learned recurrent Siamese distance as the reward

A recurrent Siamese network learns a distance between rendered motion sequences in
space (per-frame encodings) and time (LSTM encodings of the prefix). That distance,
squashed into (0, 1], is the reward for a Gaussian policy imitating one demonstration.

Example usage:
    From command line:
        virl pretrain-metric --steps 2000 --out runs/pretrain
        virl train --config run.cfg --seed 3 --out runs/walk
        virl eval --checkpoint runs/walk/checkpoint.ckpt --episodes 10

    As a module:
        python -m virl gradcheck

    In Python code:
        from virl import __version__
        print(f"Version: {__version__}")
"""

__version__ = "0.1.0"

__all__ = [
    "__version__",
]
