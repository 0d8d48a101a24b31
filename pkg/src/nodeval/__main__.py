import sys

from nodeval.cli import main

sys.exit(main())
