from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np
from sympy import QQ
from tqdm import tqdm

significant_digits = 12
zero_mode_tolerance = 1e-8
condition_warning = 1e10


def to_rational(value):
    """
    Converts a scalar into an exact rational of the ``QQ`` domain.

    Parameters
    ----------
    value : int, str, float, Fraction or QQ element
            Strings are read as ``"p/q"`` or as integers. Floats are
            converted exactly (every binary64 value is a rational).

    Returns
    -------
    q : QQ element
    """
    if isinstance(value, bool):
        raise TypeError("Booleans are not rational scalars.")
    if isinstance(value, int):
        return QQ(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            p, q = text.split("/")
            return QQ(int(p), int(q))
        return QQ(int(text))
    if isinstance(value, (float, np.floating)):
        frac = Fraction(float(value))
        return QQ(frac.numerator, frac.denominator)
    if isinstance(value, np.integer):
        return QQ(int(value))
    if isinstance(value, Fraction):
        return QQ(value.numerator, value.denominator)
    # Already a domain element
    return QQ(value.numerator, value.denominator)


def to_float(value):
    """Float value of an exact rational (or any real scalar)."""
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return int(value.numerator) / int(value.denominator)
    return float(value)


def rational_str(value):
    """Serializes a rational as ``"p/q"`` or as an integer string."""
    if value.denominator == 1:
        return str(int(value.numerator))
    return "{}/{}".format(int(value.numerator), int(value.denominator))


def round_sig(x, digits=significant_digits):
    """
    Rounds a float to a number of significant digits, so that identical
    computations serialize to identical text.
    """
    x = float(x)
    if x == 0.0 or not np.isfinite(x):
        return 0.0 if x == 0.0 else x
    return float("{:.{}g}".format(x, digits))


def map_cells(func, cells, threads=1, desc=None, verbose=False):
    """
    Applies a pure per-cell function to a list of cells.

    Parameters
    ----------
    func : callable
           Function of a single cell.
    cells : list
            Cells (or cell ids) to process.
    threads : int
              Number of worker threads. With 1 the map is sequential.
    desc : str
           Label of the progress bar.
    verbose : boolean
              Wether to show a tqdm progress bar.

    Returns
    -------
    results : list
              Results in the same order as ``cells``, whatever the number
              of threads.
    """
    cells = list(cells)
    if threads is None or threads <= 1:
        iterator = tqdm(cells, desc=desc, disable=not verbose)
        return [func(c) for c in iterator]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        iterator = executor.map(func, cells)
        return list(tqdm(iterator, total=len(cells), desc=desc, disable=not verbose))
