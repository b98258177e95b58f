use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use super::{MapMode, TileRef};

const SIZE: u32 = 256;
const CHECK: u32 = 32;
const GLYPH_SCALE: u32 = 4;

// 3×5 bitmaps, one row per entry, high bit on the left.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '/' => [0b001, 0b001, 0b010, 0b100, 0b100],
        'S' => [0b111, 0b100, 0b111, 0b001, 0b111],
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        _ => [0; 5],
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, color: Rgb<u8>) {
    for (i, c) in text.chars().enumerate() {
        let gx = x0 + i as u32 * 4 * GLYPH_SCALE;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3u32 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..GLYPH_SCALE {
                    for dx in 0..GLYPH_SCALE {
                        let x = gx + col * GLYPH_SCALE + dx;
                        let y = y0 + row as u32 * GLYPH_SCALE + dy;
                        if x < SIZE && y < SIZE {
                            img.put_pixel(x, y, color);
                        }
                    }
                }
            }
        }
    }
}

/// Checkerboard PNG labeled with the tile address, served when a tile is
/// neither cached nor reachable.
pub fn placeholder_tile(tile: TileRef, mode: MapMode) -> Vec<u8> {
    let (light, dark) = match mode {
        MapMode::Street => (Rgb([236, 236, 228]), Rgb([214, 214, 204])),
        MapMode::Satellite => (Rgb([92, 104, 88]), Rgb([72, 84, 70])),
    };
    let mut img = RgbImage::from_fn(SIZE, SIZE, |x, y| {
        if ((x / CHECK) + (y / CHECK)) % 2 == 0 {
            light
        } else {
            dark
        }
    });
    let ink = Rgb([180, 40, 40]);
    let tag = match mode {
        MapMode::Street => "S",
        MapMode::Satellite => "A",
    };
    draw_text(&mut img, tag, 12, 12, ink);
    draw_text(&mut img, &format!("{}/{}", tile.z, tile.x), 12, 120, ink);
    draw_text(&mut img, &format!("/{}", tile.y), 12, 150, ink);

    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("encoding an in-memory PNG cannot fail");
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let a = placeholder_tile(TileRef { z: 3, x: 4, y: 2 }, MapMode::Street);
        let b = placeholder_tile(TileRef { z: 3, x: 4, y: 2 }, MapMode::Street);
        let c = placeholder_tile(TileRef { z: 3, x: 4, y: 3 }, MapMode::Street);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(&a[1..4], b"PNG");
    }
}
