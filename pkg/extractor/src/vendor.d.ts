// Minimal ambient declarations for dependencies whose @types packages are
// not vendored in this environment.  Only the surface this package uses.

declare module "pngjs" {
  interface PNGOptions {
    width?: number;
    height?: number;
  }
  export class PNG {
    constructor(options?: PNGOptions);
    width: number;
    height: number;
    data: Uint8Array;
    static sync: {
      read(buffer: Uint8Array): PNG;
      write(png: PNG): Uint8Array;
    };
  }
}

declare module "jpeg-js" {
  interface RawImageData {
    width: number;
    height: number;
    data: Uint8Array;
  }
  function decode(bytes: Uint8Array, options?: { useTArray?: boolean }): RawImageData;
  function encode(image: RawImageData, quality?: number): { data: Uint8Array };
  const jpeg: { decode: typeof decode; encode: typeof encode };
  export default jpeg;
}

declare module "yargs" {
  const yargs: any;
  export default yargs;
}

declare module "yargs/helpers" {
  export function hideBin(argv: string[]): string[];
}
