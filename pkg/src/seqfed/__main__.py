import sys

from seqfed.cli import main

sys.exit(main())
