import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    // Keep per-test console output visible: the round-trip suite prints a
    // one-line verdict for the interchange check against the Python package.
    reporters: 'verbose',
    silent: false,
  },
});
