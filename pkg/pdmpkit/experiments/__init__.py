"""One experiment per command-line subcommand."""
