import sys

from crab.cli import main

sys.exit(main())
