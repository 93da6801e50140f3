#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { extract } from "./extract.js";
import { LAYER_CHANNELS, MODELS } from "./model.js";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .usage("fmap-extract --images DIR --model NAME --layer NAME --out DIR [--positions FILE]")
    .option("images", { type: "string", demandOption: true, describe: "directory of input images" })
    .option("model", {
      type: "string",
      default: "alexnet-random",
      describe: `model identifier (${Object.keys(MODELS).join(", ")})`,
    })
    .option("layer", {
      type: "string",
      demandOption: true,
      describe: `layer to export (${Object.keys(LAYER_CHANNELS).join(", ")})`,
    })
    .option("out", { type: "string", demandOption: true, describe: "output directory" })
    .option("positions", { type: "string", describe: "YAML id -> [lat, lon] file for metric ground truth" })
    .option("size", { type: "number", describe: "override the model's input edge length" })
    .strict()
    .parse();

  const summary = await extract({
    imageDir: argv.images,
    model: argv.model,
    layerName: argv.layer,
    outputDir: argv.out,
    positionsFile: argv.positions,
    inputSize: argv.size,
  });
  console.log(
    `wrote ${summary.written.length} tensors (${summary.width}x${summary.height}x${summary.channels})` +
      (summary.skipped.length ? `, skipped ${summary.skipped.length}` : "") +
      ` -> ${summary.manifestPath}`,
  );
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${(err as Error).message}`);
    process.exit(2);
  });
