import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { describe, expect, it } from "vitest";
import { readTensors, writeTensors, WireFormatError, readDataset } from "../src/wire.js";

function tmpFile(name: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "sipdl-"));
  return path.join(dir, name);
}

describe("tensor bundles", () => {
  it("round-trips a bundle exactly", () => {
    const file = tmpFile("t.bin");
    const a = { dims: [2, 3], data: new Float32Array([1, -2, 3.5, 0, 7, -0.25]) };
    const b = { dims: [1], data: new Float32Array([0.125]) };
    writeTensors(file, [a, b]);
    const back = readTensors(file);
    expect(back.length).toBe(2);
    expect(back[0].dims).toEqual([2, 3]);
    expect(Array.from(back[0].data)).toEqual(Array.from(a.data));
    expect(back[1].data[0]).toBeCloseTo(0.125, 10);
  });

  it("rejects a bad magic", () => {
    const file = tmpFile("bad.bin");
    fs.writeFileSync(file, Buffer.from("WRONGMAG" + "\0".repeat(16), "latin1"));
    expect(() => readTensors(file)).toThrow(WireFormatError);
  });

  it("rejects truncated payloads", () => {
    const file = tmpFile("trunc.bin");
    writeTensors(file, [{ dims: [4], data: new Float32Array([1, 2, 3, 4]) }]);
    const raw = fs.readFileSync(file);
    fs.writeFileSync(file, raw.subarray(0, raw.length - 6));
    expect(() => readTensors(file)).toThrow(/truncated/);
  });

  it("rejects trailing bytes", () => {
    const file = tmpFile("trail.bin");
    writeTensors(file, [{ dims: [1], data: new Float32Array([9]) }]);
    fs.appendFileSync(file, Buffer.from([1]));
    expect(() => readTensors(file)).toThrow(/trailing/);
  });

  it("rejects dim/payload mismatches on write", () => {
    const file = tmpFile("mismatch.bin");
    expect(() => writeTensors(file, [{ dims: [3], data: new Float32Array(2) }]))
      .toThrow(WireFormatError);
  });
});

describe("datasets", () => {
  function writeDataset(file: string, n: number, nR: number, nT: number,
                        K: number, T: number, fill: (i: number) => number): void {
    const links = nR * nT;
    const recordFloats = 2 * links * K * T + nT * K * T + 2 * links * K * T;
    const buf = Buffer.alloc(32 + 4 * n * recordFloats);
    buf.write("SIPDS1\0\0", 0, "latin1");
    buf.writeUInt32LE(1, 8);
    buf.writeUInt32LE(n, 12);
    buf.writeUInt32LE(nR, 16);
    buf.writeUInt32LE(nT, 20);
    buf.writeUInt32LE(K, 24);
    buf.writeUInt32LE(T, 28);
    for (let i = 0; i < n * recordFloats; i++) {
      buf.writeFloatLE(fill(i), 32 + 4 * i);
    }
    fs.writeFileSync(file, buf);
  }

  it("parses header and record layout", () => {
    const file = tmpFile("ds.bin");
    writeDataset(file, 2, 2, 2, 6, 4, (i) => i * 0.5);
    const ds = readDataset(file);
    expect([ds.n, ds.nR, ds.nT, ds.K, ds.T]).toEqual([2, 2, 2, 6, 4]);
    expect(ds.records.length).toBe(2);
    // first wire value is re of (link 0, t=0, k=0) -> k-major index 0
    expect(ds.records[0].lsRe[0]).toBeCloseTo(0.0, 10);
    expect(ds.records[0].lsIm[0]).toBeCloseTo(0.5, 10);
    // second wire pair is (t=0, k=1) -> k-major index 1*T
    expect(ds.records[0].lsRe[4]).toBeCloseTo(1.0, 10);
  });

  it("rejects wrong length", () => {
    const file = tmpFile("short.bin");
    writeDataset(file, 1, 1, 1, 4, 2, () => 0);
    const raw = fs.readFileSync(file);
    fs.writeFileSync(file, raw.subarray(0, raw.length - 4));
    expect(() => readDataset(file)).toThrow(WireFormatError);
  });
});
