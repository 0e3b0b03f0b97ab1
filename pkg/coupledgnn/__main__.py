import sys

from coupledgnn.cli import main

sys.exit(main())
