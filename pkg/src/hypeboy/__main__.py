import sys

from hypeboy.cli import main

sys.exit(main())
