# Tests for mbda
