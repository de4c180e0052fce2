class SimFault(Exception):
    """A model-level fault (double-write, bad release, memory fault, ...).

    Raised inside the simulation kernel and surfaced as a FAULT outcome with
    this message as the diagnostic.
    """
