"""Small input validation helpers shared across modules."""


def check_language_code(code) -> str:
    """Validate an ISO 639-3 style code: exactly 3 lowercase ASCII letters."""
    if not isinstance(code, str) or len(code) != 3 or not all("a" <= c <= "z" for c in code):
        raise ValueError(f"language code must be 3 lowercase ASCII letters, got {code!r}")
    return code


def check_positive(name: str, value, allow_zero=False):
    lo = 0 if allow_zero else 1
    if not isinstance(value, int) or isinstance(value, bool) or value < lo:
        raise ValueError(f"{name} must be an integer >= {lo}, got {value!r}")
    return value


def check_fraction(name: str, value, inclusive_low=True):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if ok:
        ok = (0.0 <= value if inclusive_low else 0.0 < value) and value < 1.0
    if not ok:
        raise ValueError(f"{name} must be a fraction in [0, 1), got {value!r}")
    return float(value)


def check_text_pairs(X, y=None, default_lang=None):
    """Validate estimator inputs: X as texts or (text, lang) pairs, y as texts.

    Returns (sources, target_langs, targets). Bare strings in X take
    default_lang as their target language; entries stay None when no
    default is given.
    """
    if default_lang is not None:
        default_lang = check_language_code(default_lang)
    sources, langs = [], []
    for i, item in enumerate(X):
        if isinstance(item, str):
            sources.append(item)
            langs.append(default_lang)
        elif isinstance(item, (tuple, list)) and len(item) == 2 and all(isinstance(p, str) for p in item):
            sources.append(item[0])
            langs.append(check_language_code(item[1]))
        else:
            raise ValueError(f"X[{i}] must be a string or a (text, target_lang) pair, got {item!r}")
    if y is None:
        return sources, langs, None
    targets = list(y)
    if len(targets) != len(sources):
        raise ValueError(f"X and y have different lengths: {len(sources)} vs {len(targets)}")
    for i, t in enumerate(targets):
        if not isinstance(t, str) or not t:
            raise ValueError(f"y[{i}] must be a non-empty string, got {t!r}")
    for i, s in enumerate(sources):
        if not s:
            raise ValueError(f"X[{i}] has empty source text")
    return sources, langs, targets
