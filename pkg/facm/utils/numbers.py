from typing import Union


def parse_fraction(value: Union[str, float, int]) -> float:
    """Parses a budget given as a decimal or a fraction string.

    Args:
        value: `0.3`, `"0.3"`, `"8/255"` or `"0.3/255"`.

    Raises:
        ValueError: value is not a number or a fraction.

    Returns:
        float
    """
    if isinstance(value, bool):
        raise ValueError(f"{value!r} is not a number")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        numerator, slash, denominator = value.strip().partition("/")
        if slash:
            return float(numerator) / float(denominator)
        return float(numerator)
    except (ValueError, ZeroDivisionError, AttributeError) as e:
        raise ValueError(f"{value!r} is neither a decimal nor a fraction such as '8/255'") from e
