import logging

log = logging.getLogger("cleanup")


def sweep(target, n):
    log.info("cleanup sweep finished, removed %d entries", n)
    log.error("cannot remove %s: permission denied", target)
    log.warning("skipping stale lock file %s", target)
    log.critical("cleanup aborted")
