from logging import getLogger, StreamHandler, FileHandler, Formatter, DEBUG, INFO, WARNING, ERROR, CRITICAL

logger = None

LOGGER_NAME = "Switching Successor Lab"
LEVELS = {
    "DEBUG": DEBUG,
    "INFO": INFO,
    "WARNING": WARNING,
    "ERROR": ERROR,
    "CRITICAL": CRITICAL,
}


def init_logger(file_path=None, level=DEBUG):
    """
    Initialise the project logger.
    Calling it again replaces the existing handlers.
    :param file_path: Optional log file, truncated on open.
    :param level: Level for both handlers, a logging constant or one of the LEVELS names.
    :return: The logger.
    """
    global logger

    if isinstance(level, str):
        level = LEVELS[level.upper()]

    logger = getLogger(LOGGER_NAME)
    logger.setLevel(DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = Formatter("[%(asctime)s] %(name)s | %(levelname)s | %(message)s", "%Y-%m-%d %H:%M:%S")

    stream_handler = StreamHandler()
    stream_handler.setLevel(level)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    if file_path is not None:
        file_handler = FileHandler(file_path, mode="w")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.debug("Logger initialized")

    return logger


def get_logger():
    if logger is None:
        init_logger(level=WARNING)
    return logger
