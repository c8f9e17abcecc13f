"""
errors.py

Contains the exception hierarchy shared by every module. Each subclass of
`LocalizationError` carries a numeric `err_code` keyed into its own
`ERROR_DICT`, so callers (and the CLI) can report a stable code alongside a
human-readable message.

"""


class LocalizationError(Exception):
    """
    Base error for the localization toolkit.

    Args:
        `error_code` (int): numeric code, looked up in the class `ERROR_DICT`
        `detail` (str): free-form context appended to the message
    """

    ERROR_DICT = {}

    def __init__(self, error_code, detail=''):
        super(LocalizationError, self).__init__(error_code, detail)
        self.err_code = error_code
        self.detail = detail
        try:
            err_str = self.__class__.ERROR_DICT[error_code]
            self.err_msg = '{0} [{1}]'.format(err_str, self.err_code)
        except KeyError:
            self.err_msg = 'Unknown Error [{0}]'.format(error_code)
        if detail:
            self.err_msg = '{0}: {1}'.format(self.err_msg, detail)

    def __str__(self):
        return self.err_msg


class TreeParseError(LocalizationError):
    """ Raised when a tree spec file cannot be parsed """

    UNKNOWN_DIRECTIVE = 10
    BAD_ARITY = 11
    UNDECLARED_NODE = 12
    MULTIPLE_ROOTS = 13

    ERROR_DICT = {
        10: 'Unknown Directive',
        11: 'Wrong Number Of Fields',
        12: 'Edge References Undeclared Node',
        13: 'Root Declared More Than Once',
    }


class TreeValidationError(LocalizationError):
    """ Raised when a parsed tree violates the tree model invariants """

    TOO_FEW_NODES = 20
    DUPLICATE_LABEL = 21
    BAD_INDEX = 22
    NOT_A_TREE = 23
    BAD_ROOT = 24
    BAD_ALPHA = 25
    BAD_M = 26

    ERROR_DICT = {
        20: 'Tree Needs At Least Two Nodes',
        21: 'Duplicate Node Label',
        22: 'Node Index Out Of Range',
        23: 'Graph Is Not A Tree',
        24: 'Root Must Be TRA',
        25: 'Alpha Outside Valid Range',
        26: 'Hop Limit Must Be Non-Negative',
    }


class ImageError(LocalizationError):
    """ Raised for empty, malformed or unreadable frames """

    EMPTY = 30
    BAD_SHAPE = 31
    BAD_RANGE = 32
    UNREADABLE = 33
    NO_FRAMES = 34
    BAD_PARAM = 35

    ERROR_DICT = {
        30: 'Empty Image',
        31: 'Unexpected Image Shape',
        32: 'Intensity Outside [0,255]',
        33: 'Unreadable Frame',
        34: 'No Frames Found',
        35: 'Invalid Image Parameter',
    }


class LikelihoodError(LocalizationError):
    """ Raised for uninformative or malformed likelihood data """

    ALL_ZERO = 40
    LABEL_MISMATCH = 41
    ROW_LENGTH = 42
    NEGATIVE = 43
    NON_NUMERIC = 44
    TOO_FEW_CLASSES = 45
    BAD_MODEL = 46
    FRAME_COUNT = 47

    ERROR_DICT = {
        40: 'Uninformative Likelihood (All Zero)',
        41: 'Header Does Not Match Tree Labels',
        42: 'Row Length Mismatch',
        43: 'Negative Likelihood Entry',
        44: 'Non-Numeric Likelihood Entry',
        45: 'Need Training Frames For At Least Two Classes',
        46: 'Malformed Centroid Model',
        47: 'Likelihood Rows Do Not Match Frame Count',
    }


class FilterError(LocalizationError):
    """ Raised by the Bayesian localization filter """

    DIMENSION = 50
    ZERO_EVIDENCE = 51
    BAD_K = 52
    BAD_POLICY = 53

    ERROR_DICT = {
        50: 'Dimension Mismatch',
        51: 'Mutually Exclusive Evidence (Zero Product Sum)',
        52: 'k Out Of Range',
        53: 'Unknown Gate Policy',
    }


class DecodeError(LocalizationError):
    """ Raised by the offline Viterbi decoder """

    EMPTY_SEQUENCE = 60
    DIMENSION = 61

    ERROR_DICT = {
        60: 'Empty Sequence',
        61: 'Dimension Mismatch',
    }


class EvaluationError(LocalizationError):
    """ Raised by the evaluation harness """

    EMPTY = 70
    LENGTH_MISMATCH = 71
    BAD_K = 72
    UNKNOWN_LABEL = 73

    ERROR_DICT = {
        70: 'Nothing To Evaluate',
        71: 'Prediction And Truth Lengths Differ',
        72: 'k Must Be Positive',
        73: 'Unknown Node Label',
    }


class SynthesisError(LocalizationError):
    """ Raised by the synthetic sequence generator """

    OUT_OF_BOUNDS = 80
    BAD_INTENSITY = 81
    INVALID_WALK = 82
    BAD_PARAM = 83

    ERROR_DICT = {
        80: 'Ellipse Out Of Bounds',
        81: 'Lumen Must Be Darker Than Background',
        82: 'Invalid Walk',
        83: 'Invalid Generator Parameter',
    }


class ConfigError(LocalizationError):
    """ Raised when a run configuration is inconsistent """

    MISSING_PATH = 90
    BAD_VALUE = 91
    BAD_FILE = 92

    ERROR_DICT = {
        90: 'Referenced Path Does Not Exist',
        91: 'Invalid Configuration Value',
        92: 'Malformed Run Config File',
    }
