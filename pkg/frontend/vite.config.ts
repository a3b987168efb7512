import { defineConfig } from "vite";

// dev server proxies API calls to a locally running `keytrial serve`
const API = process.env.KEYTRIAL_API ?? "http://127.0.0.1:8710";

export default defineConfig({
  server: {
    proxy: Object.fromEntries(
      ["/trials", "/simulations", "/schema", "/healthz"].map((p) => [
        p,
        { target: API, changeOrigin: true },
      ]),
    ),
  },
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
