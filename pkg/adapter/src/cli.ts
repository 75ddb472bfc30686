#!/usr/bin/env node
/** Command line matching the external matcher protocol:
 *  matchforge-adapter <image_a> <image_b> <out> [--config <path>]
 */
import { loadConfig, runAdapter } from './adapter';

function main(argv: string[]): number {
  const positional: string[] = [];
  let configPath: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--config') {
      configPath = argv[++i];
    } else {
      positional.push(argv[i]);
    }
  }
  if (positional.length !== 3) {
    process.stderr.write('usage: matchforge-adapter <image_a> <image_b> <out> [--config <path>]\n');
    return 1;
  }
  let config;
  try {
    config = loadConfig(configPath);
  } catch (err) {
    process.stderr.write(`adapter: bad config: ${err instanceof Error ? err.message : err}\n`);
    return 1;
  }
  return runAdapter(positional[0], positional[1], positional[2], config);
}

process.exit(main(process.argv.slice(2)));
