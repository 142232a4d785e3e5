"""Pluggable channel codes: identity and a rate-1/2, K=7 convolutional code.

Codecs work on bit arrays (``uint8``) and bit LLRs with ``LLR > 0`` meaning
bit 0, the convention of :func:`ce_ofdma.equalizer.soft_demod`.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DimensionError


class NoneCodec:
    """Uncoded transmission."""

    name = "none"
    rate = 1.0

    def coded_length(self, n_info):
        return n_info

    def info_length(self, n_coded):
        return n_coded

    def encode(self, bits):
        return np.asarray(bits, dtype=np.uint8).copy()

    def decode(self, llr):
        return (np.asarray(llr) < 0).astype(np.uint8)


class ConvCodec:
    """Zero-terminated convolutional code with soft-input Viterbi decoding.

    Generators are octal with the newest input bit as the most significant
    tap, so ``(0o133, 0o171)`` with ``K = 7`` is the classic 64-state code
    (free distance 10).  Each info block gets ``K - 1`` zero tail bits.
    """

    name = "conv-r12"

    def __init__(self, generators=(0o133, 0o171), constraint_length=7):
        self.k = int(constraint_length)
        self.generators = tuple(int(g) for g in generators)
        if self.k < 2 or any(not 0 < g < (1 << self.k) for g in self.generators):
            raise ConfigurationError("generators must fit in the constraint length")
        self.n_out = len(self.generators)
        self.rate = 1.0 / self.n_out
        self.n_states = 1 << (self.k - 1)
        regs = np.arange(1 << self.k)
        # output bits of every 7-bit register value, (2^K, n_out)
        self._out = np.array([[bin(r & g).count("1") & 1 for g in self.generators]
                              for r in regs], dtype=np.uint8)
        ns = np.arange(self.n_states)
        low = (ns & (self.n_states // 2 - 1)) << 1
        self._prev = np.stack([low, low | 1], axis=1)  # predecessors of each state
        self._input = ns >> (self.k - 2)               # input bit leading into ns
        regs_into = (self._input[:, None] << (self.k - 1)) | self._prev
        # +1/-1 signs of the branch outputs, (n_states, 2, n_out)
        self._signs = 1.0 - 2.0 * self._out[regs_into]

    def coded_length(self, n_info):
        return (n_info + self.k - 1) * self.n_out

    def info_length(self, n_coded):
        if n_coded % self.n_out:
            raise DimensionError("coded length is not a multiple of the output count")
        return n_coded // self.n_out - (self.k - 1)

    def encode(self, bits):
        """Encode the last axis; a 2-D input encodes each row separately."""
        bits = np.asarray(bits, dtype=np.uint8)
        flat = bits.reshape(-1, bits.shape[-1])
        padded = np.concatenate([flat, np.zeros((flat.shape[0], self.k - 1), np.uint8)], axis=1)
        state = np.zeros(flat.shape[0], dtype=np.int64)
        out = np.empty((flat.shape[0], padded.shape[1], self.n_out), dtype=np.uint8)
        for t in range(padded.shape[1]):
            reg = (padded[:, t].astype(np.int64) << (self.k - 1)) | state
            out[:, t] = self._out[reg]
            state = reg >> 1
        return out.reshape(bits.shape[:-1] + (-1,))

    def decode(self, llr, chunk=512):
        """Maximum-likelihood sequence decoding of soft inputs.

        ``llr`` has the coded length on its last axis; rows are decoded in
        batches of ``chunk`` to bound the traceback memory.
        """
        llr = np.asarray(llr, dtype=float)
        n_info = self.info_length(llr.shape[-1])
        if n_info < 0:
            raise DimensionError("coded block shorter than the tail")
        flat = llr.reshape(-1, llr.shape[-1])
        out = np.empty((flat.shape[0], n_info), dtype=np.uint8)
        for i in range(0, flat.shape[0], chunk):
            out[i:i + chunk] = self._viterbi(flat[i:i + chunk], n_info)
        return out.reshape(llr.shape[:-1] + (n_info,))

    def _viterbi(self, llr, n_info):
        b = llr.shape[0]
        steps = llr.shape[1] // self.n_out
        obs = llr.reshape(b, steps, self.n_out)
        metric = np.full((b, self.n_states), -np.inf)
        metric[:, 0] = 0.0
        choice = np.empty((steps, b, self.n_states), dtype=np.uint8)
        for t in range(steps):
            # correlation of each branch with the received soft values
            gain = np.einsum("bo,spo->bsp", obs[:, t], self._signs)
            cand = metric[:, self._prev] + gain
            pick = cand[..., 1] > cand[..., 0]
            choice[t] = pick
            metric = np.where(pick, cand[..., 1], cand[..., 0])
        state = np.zeros(b, dtype=np.int64)  # zero-terminated
        bits = np.empty((b, steps), dtype=np.uint8)
        rows = np.arange(b)
        for t in range(steps - 1, -1, -1):
            bits[:, t] = self._input[state]
            state = self._prev[state, choice[t, rows, state]]
        return bits[:, :n_info]


_REGISTRY = {"none": NoneCodec, "conv-r12": ConvCodec}


def get_codec(name):
    """Instantiate a registered codec by id (``"none"`` or ``"conv-r12"``)."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown codec {name!r}; choose from {sorted(_REGISTRY)}") from None


def register_codec(name, factory):
    _REGISTRY[name] = factory


def fec_encode(bits, codec="none"):
    return get_codec(codec).encode(bits)


def fec_decode(llr, codec="none"):
    return get_codec(codec).decode(llr)


# distance spectrum (free distance 10) of the K=7 (133, 171) code:
# d -> total information weight of error events at distance d
CONV_R12_SPECTRUM = {10: 36, 12: 211, 14: 1404, 16: 11633, 18: 77433, 20: 502690,
                     22: 3322763, 24: 21292910}


def conv_union_bound(ebn0_db, spectrum=None, rate=0.5):
    """Soft-decision union bound ``sum_d c_d Q(sqrt(2 d R Eb/N0))`` on the bit error rate."""
    from scipy.special import erfc

    spectrum = CONV_R12_SPECTRUM if spectrum is None else spectrum
    ebn0 = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    total = 0.0
    for d, c in spectrum.items():
        total = total + c * 0.5 * erfc(np.sqrt(d * rate * ebn0))
    return total
