"""Multiple-access schemes: grouping, SIC decoding orders and stream layouts.

Users are 0-based.  A decoding order lists the users of one group from the
weakest to the strongest channel; the stream of the user at position ``a``
is decoded, in that order, by every user at position ``b >= a``.  The
weakest user therefore decodes only its own stream and the strongest user
peels off all the others first.

Precoder (stream) indices: stream ``k < K`` carries the message of user
``k``; for RS the common stream has index ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, UsageError

__all__ = [
    "KINDS",
    "StrategyConfig",
    "Stream",
    "StreamLayout",
    "build_grouping",
    "decoding_order",
    "stream_layout",
    "parse_strategy",
]

KINDS = ("NOMA", "MULP", "RS1", "OMA")


def build_grouping(K, G):
    """Contiguous grouping: group ``i`` holds users ``i*g .. i*g + g - 1``."""
    if int(K) != K or int(G) != G or K < 1:
        raise ConfigurationError(f"K and G must be positive integers, got K={K}, G={G}")
    if not 1 <= G < K:
        raise ConfigurationError(f"NOMA needs 1 <= G < K, got G={G}, K={K}")
    if K % G:
        raise ConfigurationError(f"G={G} does not divide K={K}")
    g = K // G
    return tuple(tuple(range(i * g, (i + 1) * g)) for i in range(G))


def _check_grouping(grouping, K):
    users = sorted(u for cell in grouping for u in cell)
    if users != list(range(K)):
        raise ConfigurationError("grouping cells must be disjoint and cover all users")
    sizes = {len(cell) for cell in grouping}
    if len(sizes) != 1:
        raise ConfigurationError("grouping cells must have equal size")


def decoding_order(cs, grouping, use_estimates=False):
    """Per-group user lists sorted by ascending channel norm (ties by index)."""
    K = cs.num_users
    _check_grouping(grouping, K)
    norms = cs.norms(use_estimates)
    orders = []
    for cell in grouping:
        cell = sorted(cell)
        idx = np.argsort(norms[cell], kind="stable")
        orders.append(tuple(cell[i] for i in idx))
    return tuple(orders)


@dataclass(frozen=True)
class StrategyConfig:
    """Scheme description.  NOMA needs ``num_groups``; orders may be filled later."""

    kind: str
    num_users: int
    num_groups: int | None = None
    grouping: tuple | None = None
    decoding_orders: tuple | None = None

    def __post_init__(self):
        kind = str(self.kind).upper().replace("-", "").replace("_", "")
        if kind == "RS":
            kind = "RS1"
        if kind not in KINDS:
            raise ConfigurationError(f"unknown strategy kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        K = self.num_users
        if int(K) != K or K < 1:
            raise ConfigurationError("num_users must be a positive integer")
        if kind == "NOMA":
            if self.num_groups is None:
                raise ConfigurationError("NOMA requires num_groups")
            grouping = self.grouping
            if grouping is None:
                grouping = build_grouping(K, self.num_groups)
            else:
                grouping = tuple(tuple(int(u) for u in cell) for cell in grouping)
                _check_grouping(grouping, K)
                if len(grouping) != self.num_groups:
                    raise ConfigurationError("grouping size does not match num_groups")
                if not 1 <= self.num_groups < K:
                    raise ConfigurationError("NOMA needs 1 <= G < K")
            object.__setattr__(self, "grouping", grouping)
            if self.decoding_orders is not None:
                orders = tuple(tuple(int(u) for u in o) for o in self.decoding_orders)
                if len(orders) != len(grouping) or any(
                    sorted(o) != sorted(cell) for o, cell in zip(orders, grouping)
                ):
                    raise ConfigurationError("decoding orders must permute each group")
                object.__setattr__(self, "decoding_orders", orders)
        else:
            if self.num_groups is not None or self.grouping is not None or self.decoding_orders is not None:
                raise ConfigurationError(f"{kind} takes no grouping or decoding order")

    @property
    def common_stream_present(self):
        return self.kind == "RS1"

    @property
    def group_size(self):
        return self.num_users // self.num_groups if self.kind == "NOMA" else 1

    @property
    def name(self):
        return f"NOMA-G{self.num_groups}" if self.kind == "NOMA" else self.kind

    @property
    def num_streams(self):
        return self.num_users + (1 if self.kind == "RS1" else 0)

    def with_orders(self, cs, use_estimates=False):
        """Copy with the decoding orders derived from ``cs`` (NOMA only)."""
        if self.kind != "NOMA":
            return self
        if cs.num_users != self.num_users:
            raise ConfigurationError("channel user count does not match the strategy")
        return replace(self, decoding_orders=decoding_order(cs, self.grouping, use_estimates))


def parse_strategy(name, K):
    """Build a config from names such as ``NOMA-G3``, ``MULP``, ``RS1``, ``OMA``."""
    text = str(name).strip().upper()
    if text.startswith("NOMA"):
        rest = text[4:].lstrip("-_ ")
        if not rest.startswith("G") or not rest[1:].isdigit():
            raise ConfigurationError(f"NOMA strategy needs a group count, e.g. NOMA-G3: {name!r}")
        return StrategyConfig("NOMA", K, num_groups=int(rest[1:]))
    return StrategyConfig(text, K)


@dataclass(frozen=True)
class Stream:
    index: int
    owner: int | None
    decoders: tuple
    noise_users: tuple


@dataclass(frozen=True, eq=False)
class StreamLayout:
    """Who decodes which stream, and what each decoder sees as interference.

    ``links`` enumerates (decoder, stream) pairs; ``interference[l, s]`` is
    true when stream ``s`` is still present as noise while link ``l`` is
    being decoded.  ``blocks`` groups the links whose minimum defines a
    stream rate.
    """

    kind: str
    num_users: int
    streams: tuple
    links: tuple
    interference: np.ndarray
    sic_counts: tuple

    @property
    def num_streams(self):
        return len(self.streams)

    @property
    def common_index(self):
        return self.num_users if self.kind == "RS1" else None

    def decode_set(self, stream):
        return self.streams[stream].decoders

    def link_index(self, decoder, stream):
        try:
            return self.links.index((decoder, stream))
        except ValueError:
            raise UsageError(f"user {decoder} does not decode stream {stream}") from None

    def stream_blocks(self):
        """For each stream, the indices of its decode links."""
        out = [[] for _ in self.streams]
        for i, (_, s) in enumerate(self.links):
            out[s].append(i)
        return [tuple(b) for b in out]


def stream_layout(config):
    """Decode sets, interference masks and SIC counts for a configuration."""
    K = config.num_users
    kind = config.kind
    S = config.num_streams
    links = []
    masks = []
    decoders = {s: [] for s in range(S)}
    sic = [0] * K
    if kind == "NOMA":
        if config.decoding_orders is None:
            raise UsageError("NOMA layout needs decoding orders; call config.with_orders(cs)")
        group_of = {}
        for gi, order in enumerate(config.decoding_orders):
            for pos, u in enumerate(order):
                group_of[u] = (gi, pos)
        for order in config.decoding_orders:
            for a, k in enumerate(order):
                for b in range(a, len(order)):
                    j = order[b]
                    mask = np.ones(S, dtype=bool)
                    mask[k] = False
                    # streams of weaker users in the group were already removed by SIC
                    for m in order[:a]:
                        mask[m] = False
                    links.append((j, k))
                    masks.append(mask)
                    decoders[k].append(j)
        for u, (gi, pos) in group_of.items():
            sic[u] = pos
    elif kind in ("MULP", "OMA"):
        for k in range(K):
            mask = np.ones(S, dtype=bool)
            mask[k] = False
            links.append((k, k))
            masks.append(mask)
            decoders[k].append(k)
    else:
        c = K
        for j in range(K):
            mask = np.ones(S, dtype=bool)
            mask[c] = False
            links.append((j, c))
            masks.append(mask)
            decoders[c].append(j)
        for k in range(K):
            mask = np.ones(S, dtype=bool)
            mask[k] = False
            mask[c] = False
            links.append((k, k))
            masks.append(mask)
            decoders[k].append(k)
        sic = [1] * K
    streams = []
    for s in range(S):
        dec = tuple(sorted(decoders[s]))
        owner = s if s < K else None
        streams.append(Stream(s, owner, dec, tuple(u for u in range(K) if u not in dec)))
    inter = np.array(masks, dtype=bool)
    inter.setflags(write=False)
    return StreamLayout(kind, K, tuple(streams), tuple(links), inter, tuple(sic))
