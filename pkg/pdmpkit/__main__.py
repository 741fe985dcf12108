import sys

from pdmpkit.cli import main

sys.exit(main())
