"""Multi-key TFHE-style training toolkit.

Layers, bottom up: torus arithmetic (:mod:`.torus`), multi-key TLWE
(:mod:`.tlwe`), additive shares (:mod:`.shares`), distributed decryption
(:mod:`.distdec` over :mod:`.wire`), gate backends (:mod:`.backend`),
integer circuits (:mod:`.circuits`), activations (:mod:`.activation`) and
scaled-integer training (:mod:`.ml`).
"""

from .backend import ClearBackend, EncBit, GateCounter, NoiseSimBackend, make_backend
from .circuits import (EncWord, compare_quads, decode_word, mk_add, mk_div, mk_enc_word, mk_mul,
                       mk_sub, trivial_word)
from .distdec import distributed_decrypt
from .tlwe import MKCiphertext, MKParams, SecretKey, decrypt_naive, encrypt_bit, keygen, setup
from .torus import NoiseParams, NoiseSampler, torus_from_real

__version__ = "0.1.0"

__all__ = [
    "ClearBackend", "EncBit", "EncWord", "GateCounter", "MKCiphertext", "MKParams",
    "NoiseParams", "NoiseSampler", "NoiseSimBackend", "SecretKey", "compare_quads",
    "decode_word", "decrypt_naive", "distributed_decrypt", "encrypt_bit", "keygen",
    "make_backend", "mk_add", "mk_div", "mk_enc_word", "mk_mul", "mk_sub", "setup",
    "torus_from_real", "trivial_word",
]
