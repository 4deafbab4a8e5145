VERSION = __version__ = "{{VERSION}}"
