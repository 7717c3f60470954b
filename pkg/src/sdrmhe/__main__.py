import sys

from sdrmhe.cli import main

sys.exit(main())
