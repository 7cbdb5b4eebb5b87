'''
Seed derivation.

A run has a single master seed. Every stage, speaker and utterance gets its
own seed by hashing the master seed together with a path of names:

    derive_seed(master, 'corpus', 'spk01', 'utt0007')
        = int(sha256('<master>/corpus/spk01/utt0007').hexdigest()[:8], 16)

so any piece can be regenerated in isolation without replaying the random
streams of everything before it.
'''
import hashlib

import numpy as np
import torch


def derive_seed(master, *names):
    path = '/'.join([str(master)] + [str(name) for name in names])
    return int(hashlib.sha256(path.encode('utf8')).hexdigest()[:8], 16)


def numpy_rng(master, *names):
    return np.random.default_rng(derive_seed(master, *names))


def torch_generator(master, *names):
    generator = torch.Generator()
    generator.manual_seed(derive_seed(master, *names))
    return generator
