"""Multiple access, compact downlink control messages and PDCCH type detection.

Two allocation modes keep users from superposing inside one CE block:
symbol-level (SLMA) gives each user whole OFDM symbols of a slot, and
bit-level (BLMA) splits the bits of one block into 24-bit segments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError, CrcError, DimensionError, \
    IndeterminateSpectrumError

PILOT_SYMBOL = 0
SEGMENT_BITS = 24
CRC_BITS = 16
CRC_POLY = 0x1021
MCS_BITS = 3
FORMAT1_TIME_BITS = 2


# ---------------------------------------------------------------- allocation

@dataclass(frozen=True)
class ResourceMap:
    """Immutable snapshot of one scheduling decision.

    ``symbol_users[s][i]`` is the user on symbol ``i`` of slot ``s`` (``None``
    for the pilot); ``segment_users[g]`` is the user of bit segment ``g``.
    Exactly one of the two is populated.
    """

    mode: str
    symbol_users: tuple[tuple, ...] = ()
    segment_users: tuple = ()
    pilot_symbol_index: int = PILOT_SYMBOL

    def __post_init__(self):
        if self.mode not in ("slma", "blma"):
            raise ConfigurationError(f"unknown allocation mode {self.mode!r}")

    def symbols_of(self, user):
        """``(slot, symbol)`` pairs assigned to ``user``."""
        return [(s, i) for s, row in enumerate(self.symbol_users)
                for i, u in enumerate(row) if u == user]

    def segments_of(self, user):
        return [g for g, u in enumerate(self.segment_users) if u == user]

    def bit_ranges_of(self, user):
        """Half-open bit intervals of ``user`` (24-bit aligned)."""
        return [(g * SEGMENT_BITS, (g + 1) * SEGMENT_BITS) for g in self.segments_of(user)]

    def to_dict(self):
        out = {"mode": self.mode, "pilot_symbol_index": self.pilot_symbol_index}
        if self.mode == "slma":
            out["symbol_users"] = [list(row) for row in self.symbol_users]
        else:
            out["segment_bits"] = SEGMENT_BITS
            out["segment_users"] = list(self.segment_users)
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data):
        return cls(mode=data["mode"],
                   symbol_users=tuple(tuple(r) for r in data.get("symbol_users", ())),
                   segment_users=tuple(data.get("segment_users", ())),
                   pilot_symbol_index=int(data.get("pilot_symbol_index", PILOT_SYMBOL)))


def _check_users(users):
    users = list(users)
    if not users:
        raise ConfigurationError("no users to schedule")
    if len(set(users)) != len(users):
        raise ConfigurationError("duplicate user identifiers")
    return users


def slma_allocate(users, slots=1, symbols_per_slot=14):
    """Symbol-level allocation: round-robin over the data symbols.

    Symbol 0 of every slot is the pilot; data symbols ``1..S-1`` of slots
    ``0..slots-1`` are handed out in turn, so each symbol carries one user.

    Raises
    ------
    CapacityError
        If there are more users than data symbols in the window.
    """
    users = _check_users(users)
    if symbols_per_slot < 2:
        raise ConfigurationError("a slot needs a pilot and at least one data symbol")
    if slots < 1:
        raise ConfigurationError("at least one slot is required")
    n_data = slots * (symbols_per_slot - 1)
    if len(users) > n_data:
        raise CapacityError(f"{len(users)} users but only {n_data} data symbols")
    rows, turn = [], 0
    for _ in range(slots):
        row = [None]
        for _ in range(1, symbols_per_slot):
            row.append(users[turn % len(users)])
            turn += 1
        rows.append(tuple(row))
    return ResourceMap("slma", symbol_users=tuple(rows))


def blma_segment(total_data_bits):
    """Number of whole 24-bit segments in ``N`` data bits."""
    if total_data_bits < 0:
        raise ConfigurationError("bit count must be non-negative")
    return int(total_data_bits) // SEGMENT_BITS


def blma_allocate(users, total_data_bits, demands=None):
    """Bit-level allocation of contiguous segment runs.

    ``demands`` gives segments per user; by default the segments are split
    as evenly as possible (earlier users get the remainder).
    """
    users = _check_users(users)
    n_seg = blma_segment(total_data_bits)
    if demands is None:
        base, extra = divmod(n_seg, len(users))
        demands = [base + (i < extra) for i in range(len(users))]
    demands = [int(d) for d in demands]
    if len(demands) != len(users) or any(d < 0 for d in demands):
        raise ConfigurationError("one non-negative demand per user is required")
    if sum(demands) > n_seg:
        raise CapacityError(f"demand of {sum(demands)} segments exceeds {n_seg}")
    if min(demands) == 0:
        raise CapacityError("some user would receive no segment")
    owners = []
    for u, d in zip(users, demands):
        owners.extend([u] * d)
    owners.extend([None] * (n_seg - len(owners)))
    return ResourceMap("blma", segment_users=tuple(owners))


# --------------------------------------------------------------------- DCI

def bitdomain_field_size(n_seg):
    """``ceil(log2(N_seg (N_seg + 1) / 2))`` bits for a (start, length) pair."""
    if n_seg < 1:
        raise ConfigurationError("need at least one segment")
    n_codes = n_seg * (n_seg + 1) // 2
    return 0 if n_codes == 1 else math.ceil(math.log2(n_codes))


def riv_encode(start, length, n_seg):
    """Resource indication value of a contiguous run; bijective onto
    ``[0, N(N+1)/2)``."""
    if not (length >= 1 and start >= 0 and start + length <= n_seg):
        raise ConfigurationError(f"run ({start}, {length}) does not fit in {n_seg} segments")
    if length - 1 <= n_seg // 2:
        return n_seg * (length - 1) + start
    return n_seg * (n_seg - length + 1) + (n_seg - 1 - start)


def riv_decode(riv, n_seg):
    if not 0 <= riv < n_seg * (n_seg + 1) // 2:
        raise ConfigurationError(f"RIV {riv} out of range for {n_seg} segments")
    q, r = divmod(riv, n_seg)
    length, start = q + 1, r
    if start + length > n_seg:
        length, start = n_seg - q + 1, n_seg - 1 - r
    return start, length


@dataclass(frozen=True)
class DciConfig:
    """Field widths; the format-0 time fields are RRC-configurable."""

    slot_offset_bits: int = 2
    num_slots_bits: int = 2
    symbol_index_bits: int = 4
    n_segments: int = 8

    def payload_bits(self, fmt):
        if fmt == 0:
            return self.slot_offset_bits + self.num_slots_bits + self.symbol_index_bits + MCS_BITS
        if fmt == 1:
            return FORMAT1_TIME_BITS + bitdomain_field_size(self.n_segments) + MCS_BITS
        raise ConfigurationError(f"unknown DCI format {fmt!r}")

    def total_bits(self, fmt):
        return self.payload_bits(fmt) + CRC_BITS


@dataclass(frozen=True)
class DciMessage:
    """Compact downlink control message.

    Format 0 (SLMA) carries ``slot_offset``, ``num_slots`` (stored as
    ``L - 1``) and ``symbol_index``; format 1 (BLMA) carries ``slot_offset``
    and the segment run ``(bsi_start, bsi_len)``.  No frequency-domain
    resource field exists: the band is fixed by the CE waveform.
    """

    format: int
    slot_offset: int
    mcs_code_rate_index: int
    crc_rnti: int
    num_slots: int | None = None
    symbol_index: int | None = None
    bsi_start: int | None = None
    bsi_len: int | None = None


def _int_bits(value, width, name):
    if width == 0:
        if value != 0:
            raise ConfigurationError(f"{name}={value} needs a non-empty field")
        return []
    if not 0 <= value < (1 << width):
        raise ConfigurationError(f"{name}={value} does not fit in {width} bits")
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def _bits_int(bits):
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def crc16(bits):
    """CRC-16/CCITT (poly 0x1021, zero init, no reflection) of an MSB-first bit list."""
    reg = 0
    for b in bits:
        top = ((reg >> 15) & 1) ^ int(b)
        reg = (reg << 1) & 0xFFFF
        if top:
            reg ^= CRC_POLY
    return reg


def encode_dci(msg, config=None):
    """Serialize ``msg`` MSB-first and append ``CRC16(payload) XOR RNTI``.

    Returns a ``uint8`` bit vector of ``config.total_bits(msg.format)`` bits.
    """
    config = config or DciConfig()
    if not 0 <= msg.crc_rnti < (1 << CRC_BITS):
        raise ConfigurationError("RNTI must be a 16-bit value")
    if msg.format == 0:
        if msg.num_slots is None or msg.symbol_index is None:
            raise ConfigurationError("format 0 needs num_slots and symbol_index")
        payload = (_int_bits(msg.slot_offset, config.slot_offset_bits, "slot_offset")
                   + _int_bits(msg.num_slots - 1, config.num_slots_bits, "num_slots - 1")
                   + _int_bits(msg.symbol_index, config.symbol_index_bits, "symbol_index"))
    elif msg.format == 1:
        if msg.bsi_start is None or msg.bsi_len is None:
            raise ConfigurationError("format 1 needs bsi_start and bsi_len")
        riv = riv_encode(msg.bsi_start, msg.bsi_len, config.n_segments)
        payload = (_int_bits(msg.slot_offset, FORMAT1_TIME_BITS, "slot_offset")
                   + _int_bits(riv, bitdomain_field_size(config.n_segments), "riv"))
    else:
        raise ConfigurationError(f"unknown DCI format {msg.format!r}")
    payload += _int_bits(msg.mcs_code_rate_index, MCS_BITS, "mcs_code_rate_index")
    crc = crc16(payload) ^ msg.crc_rnti
    bits = np.array(payload + _int_bits(crc, CRC_BITS, "crc"), dtype=np.uint8)
    assert bits.size == config.total_bits(msg.format)
    return bits


def decode_dci(bits, fmt, config=None, rnti=None):
    """Parse a DCI bit vector.

    With ``rnti`` given, the descrambled CRC must match; otherwise the RNTI
    is recovered as ``received CRC XOR CRC16(payload)``.

    Raises
    ------
    CrcError
        CRC mismatch for the expected RNTI (blind-detection miss).
    """
    config = config or DciConfig()
    bits = [int(b) for b in np.asarray(bits).ravel()]
    if len(bits) != config.total_bits(fmt):
        raise DimensionError(f"format {fmt} DCI has {config.total_bits(fmt)} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise DimensionError("DCI bits must be 0 or 1")
    payload, crc_field = bits[:-CRC_BITS], _bits_int(bits[-CRC_BITS:])
    recovered = crc_field ^ crc16(payload)
    if rnti is not None and recovered != rnti:
        raise CrcError("CRC check failed for the expected RNTI")
    pos = 0

    def take(width):
        nonlocal pos
        v = _bits_int(payload[pos:pos + width])
        pos += width
        return v

    if fmt == 0:
        k = take(config.slot_offset_bits)
        n_slots = take(config.num_slots_bits) + 1
        j = take(config.symbol_index_bits)
        return DciMessage(0, k, take(MCS_BITS), recovered, num_slots=n_slots, symbol_index=j)
    k = take(FORMAT1_TIME_BITS)
    riv = take(bitdomain_field_size(config.n_segments))
    try:
        start, length = riv_decode(riv, config.n_segments)
    except ConfigurationError as exc:
        raise CrcError(f"invalid resource indication: {exc}") from exc
    return DciMessage(1, k, take(MCS_BITS), recovered, bsi_start=start, bsi_len=length)


# -------------------------------------------------------------- classifier

@dataclass(frozen=True)
class PdcchDecision:
    """Classifier output; ``ratio_db`` is the centre/flank power ratio."""

    label: str
    ratio_db: float
    low_confidence: bool
    signal_to_noise: float = field(default=float("nan"))


def classify_pdcch(spectrum, n_complex_symbols, noise_var=None, threshold_db=4.0,
                   lobe_order=1, significance=3.0):
    """Tell a CE-PDCCH main lobe apart from a flat legacy PDCCH spectrum.

    The statistic compares the mean power of the central ``N_d`` bins with
    the mean power of the ``N_d`` outermost bins (``N_d / 2`` on each edge)
    of the ``(2 Bbar + 1) N_d`` bins centred in ``spectrum``.

    Parameters
    ----------
    spectrum : array_like
        Received subcarriers over the control band, centred on it.
    n_complex_symbols : int
    noise_var : float, optional
        Per-bin noise power.  When given it is subtracted from both means,
        which keeps the statistic meaningful below 0 dB per-bin SNR.
    threshold_db : float
        Decision threshold on the ratio.  The default balances misses and
        false alarms at 0 dB E_s/N_0; a noiseless CE lobe sits near 13 dB.
    significance : float
        Signal power below ``significance`` noise standard errors marks the
        decision as low-confidence.

    Raises
    ------
    IndeterminateSpectrumError
        All-zero spectrum.
    """
    y = np.asarray(spectrum)
    nd = int(n_complex_symbols)
    nbar = (2 * lobe_order + 1) * nd
    if nd < 2 or nd % 2:
        raise ConfigurationError("n_complex_symbols must be even and at least 2")
    if y.ndim != 1 or y.size < nbar:
        raise DimensionError(f"spectrum must cover at least {nbar} bins")
    power = np.abs(y) ** 2
    if not np.any(power > 0):
        raise IndeterminateSpectrumError("spectrum carries no energy")
    lo = (y.size - nbar) // 2
    band = power[lo:lo + nbar]
    centre = band[(nbar - nd) // 2:(nbar + nd) // 2].mean()
    flank = np.concatenate([band[:nd // 2], band[-nd // 2:]]).mean()
    var = float(noise_var or 0.0)
    # standard error of a mean of nd exponential noise bins
    err = var / math.sqrt(nd)
    c = max(centre - var, 0.0) + err
    f = max(flank - var, 0.0) + err
    if c == 0 and f == 0:
        raise IndeterminateSpectrumError("spectrum carries no energy")
    ratio_db = 10 * math.log10(c / f) if f > 0 else math.inf
    snr = (band.mean() - var) / (var / math.sqrt(nbar)) if var > 0 else math.inf
    label = "ce" if ratio_db > threshold_db and snr >= significance else "legacy"
    # without a noise reference a flat spectrum may just be noise
    low = snr < significance or abs(ratio_db - threshold_db) < 1.0 \
        or (noise_var is None and label == "legacy")
    return PdcchDecision(label, ratio_db, bool(low), float(snr))
