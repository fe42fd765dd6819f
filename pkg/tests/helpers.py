"""Shared test utilities: frozen keys, data generation, plaintext oracles."""

import numpy as np

from fedwagg._rng import HashDrbg
from fedwagg.paillier import keygen

# Frozen probable primes (generated once with the package's own generator,
# verified against sympy.isprime in the key tests) so key-dependent tests
# are fast and deterministic.
KEY512_P = 90770658957942528379050686373296786572187652828890676193496439839267512252057
KEY512_Q = 98691775323869517522250912400461086181350449725413215121669354596100446062229
KEY1024_P = 12259539971588847285025966277786614639906573583156306175870836933549427588869393962203415549459998119288960060717013807987997996136781340537063853872160363
KEY1024_Q = 7455602169777366182220387284826856073520622302143751143656435211375928665185108888551717896231998151554193134434970380478516106989889358152833602405148367


def toy_keypair():
    return keygen(7, 11)


def keypair_512():
    return keygen(KEY512_P, KEY512_Q)


def keypair_1024():
    return keygen(KEY1024_P, KEY1024_Q)


def drbg(label: str) -> HashDrbg:
    return HashDrbg(b"fedwagg-tests", label)


def make_client_data(np_rng, n_samples: int, dim: int):
    """Labelled data with a learnable linear structure, features in [0, 1]."""
    x = np_rng.uniform(0.0, 1.0, (n_samples, dim))
    w = np_rng.normal(0.0, 1.0, dim)
    scores = x @ w + np_rng.normal(0.0, 0.3, n_samples)
    y = (scores > np.median(scores)).astype(int)
    return x, y


def weighted_average_oracle(runner, state):
    """Plaintext weighted average of the surviving users' local models."""
    records = {r.user: r for r in state.weight_records}
    omega_sum = sum(records[u].omega for u in state.u6)
    oracle = np.zeros(runner.dim)
    for u in state.u6:
        oracle += records[u].omega / omega_sum * runner.clients[u].model.theta
    return oracle
