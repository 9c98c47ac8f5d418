"""
A collection of some generic useful methods

IMPORTANT: do not import anything other than standard libraries here, this should be usable by _everywhere_ if possible.
Specifically, do not import torch, numpy or django here, so that the config
layer and the command line parsing can use it without pulling in the numerics.
"""

import math


def natural_list_parse(s, symbol_only=False):
    """Parses a 'natural language' list, e.g.. seperated by commas,
    semi-colons, 'and', 'or', etc..."""
    tokens = [s]
    seperators = [',', ';', '&', '+']
    if not symbol_only:
        seperators += [' and ', ' or ', ' and/or ', ' vs. ']
    for sep in seperators:
        newtokens = []
        for token in tokens:
            while len(token) > 0:
                before, found, after = token.partition(sep)
                newtokens.append(before)
                token = after
        tokens = newtokens
    return [x for x in [x.strip() for x in tokens] if len(x) > 0]


def next_multiple(n, base):
    """smallest multiple of `base` that is >= n"""
    return int(math.ceil(n / base)) * base


def scale_milestones(milestones, iters, full_iters):
    """Rescales full-length schedule milestones to a shorter run, keeping them
    strictly increasing and >= 1"""
    if iters >= full_iters:
        return list(milestones)
    scaled = {max(1, round(m * iters / full_iters)) for m in milestones}
    return sorted(scaled)


def format_metric(value, precision=4):
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return f'{value:.{precision}f}'


def set_mismatch(expected, actual):
    return set(expected) - set(actual), set(actual) - set(expected)
