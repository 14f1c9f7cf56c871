import pandas as pd


class plural:
    def __init__(self, value, pretty=False):
        self.value = value
        self.pretty = pretty

    def __format__(self, format_spec):
        v = self.value
        singular, sep, plural = format_spec.partition("|")
        plural = plural or f"{singular}s"

        text = v if not self.pretty else f"{v:,}"

        if abs(v) != 1:
            return f"{text} {plural}"
        return f"{text} {singular}"


def fmt_float(value, digits=4):
    if value is None:
        return "-"
    if value == float("inf"):
        return "inf"
    return f"{value:.{digits}f}"


def name_value(data, middle_block=" :: "):
    """Aligns ``(name, value)`` pairs into lines, longest name first-column width.

    Parameters
    -----------
    data: :class:`List[Tuple[str, Any]]`
        The pairs to render
    middle_block: Optional[:class:`str`]
        Separator between name and value
    """
    longest_name = max((len(name) for name, _ in data), default=0)
    return "\n".join(f"{name:<{longest_name}}{middle_block}{value}" for name, value in data)


class ResultTable:
    """A results frame as an rST grid table.

    Floats are printed fixed-point and numeric columns are right-aligned::

        +----------+---+-----------+
        | method   | r | avg_ratio |
        +==========+===+===========+
        | cover-h2 | 1 |    0.9412 |
        +----------+---+-----------+
    """

    def __init__(self, frame, digits=4):
        self.columns = [str(c) for c in frame.columns]
        self.right = [pd.api.types.is_numeric_dtype(frame[c]) for c in frame.columns]
        self.rows = [[self._cell(v, digits) for v in row] for row in frame.itertuples(index=False)]

    @staticmethod
    def _cell(value, digits):
        if isinstance(value, float):
            return fmt_float(value, digits)
        return str(value)

    def widths(self):
        return [max([len(name)] + [len(row[i]) for row in self.rows]) for i, name in enumerate(self.columns)]

    def render(self):
        widths = self.widths()
        rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"

        def line(cells, right):
            parts = (f" {cell:>{w}} " if r else f" {cell:<{w}} " for cell, w, r in zip(cells, widths, right))
            return "|" + "|".join(parts) + "|"

        lines = [rule, line(self.columns, [False] * len(widths)), rule.replace("-", "=")]
        lines.extend(line(row, self.right) for row in self.rows)
        lines.append(rule)
        return "\n".join(lines)
