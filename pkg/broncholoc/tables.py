"""
tables.py

CSV helpers shared by the likelihood, posterior and report writers.

"""
import csv
import logging

import pandas as pd

logger = logging.getLogger(__name__)

ENCODINGS = ('utf-8-sig', 'utf-8', 'cp1252', 'latin-1')


def read_csv_with_fallback(path, **kwargs) -> pd.DataFrame:
    """
    pandas.read_csv trying a few encodings in turn; latin-1 maps every byte,
    so the last attempt always decodes. Floats are parsed with round-trip
    precision so values written by `format_float` come back bit-identical.
    """
    kwargs.setdefault('float_precision', 'round_trip')
    for encoding in ENCODINGS[:-1]:
        try:
            return pd.read_csv(path, encoding=encoding, **kwargs)
        except UnicodeDecodeError:
            logger.debug('%s is not %s', path, encoding)
    return pd.read_csv(path, encoding=ENCODINGS[-1], **kwargs)


def format_float(value) -> str:
    """Shortest string that parses back to the same double."""
    return repr(float(value))


def write_rows(handle, header, rows) -> None:
    writer = csv.writer(handle, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
