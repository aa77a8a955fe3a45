import sys

from urbanrl.cli import main

sys.exit(main())
