import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    environment: "node",
    // the replay suite spawns the real Python service
    testTimeout: 180_000,
    hookTimeout: 180_000,
    fileParallelism: false,
  },
});
